//! Human-readable report rendering.

use planocheck_core::pipeline::PipelineOutput;

pub fn text_report(out: &PipelineOutput) -> String {
    let mut s = String::new();
    let verdict = if out.compliant() { "COMPLIANT" } else { "NON-COMPLIANT" };
    s.push_str(&format!(
        "overall accuracy {:.2}%  [{verdict}]\n",
        out.overall_accuracy * 100.0
    ));
    s.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>9} {:>8} {:>11}\n",
        "type", "expected", "matched", "accuracy", "missing", "unexpected"
    ));
    for t in &out.types {
        s.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>8.1}% {:>8} {:>11}\n",
            t.type_id,
            t.expected,
            t.matched,
            t.accuracy * 100.0,
            t.missing_slots.len(),
            t.unexpected.len()
        ));
        for m in &t.missing_slots {
            s.push_str(&format!(
                "    missing: slot {} (row {}, col {}) at ({:.3}, {:.3})\n",
                m.slot, m.row, m.col, m.x, m.y
            ));
        }
    }
    let redetected = out.detections.iter().filter(|d| d.redetected).count();
    s.push_str(&format!("detections: {} ({} re-detected)\n", out.detections.len(), redetected));
    s
}
