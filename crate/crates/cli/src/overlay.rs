//! SVG 1.1 overlay: one circle per detected product, fill keyed by type.

use planocheck_core::pipeline::PipelineOutput;

const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#fabebe", "#008080", "#e6beff", "#9a6324",
];

pub fn render(out: &PipelineOutput) -> String {
    let (w, h) = (out.scene_width, out.scene_height);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    for ex in &out.exemplars {
        s.push_str(&format!(
            "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 2\"/>\n",
            ex.x, ex.y, ex.w, ex.h
        ));
    }
    for d in &out.detections {
        let color = match &d.type_id {
            Some(t) => {
                let idx = out
                    .types
                    .iter()
                    .position(|ty| &ty.type_id == t)
                    .unwrap_or(0);
                PALETTE[idx % PALETTE.len()]
            }
            None => "#808080",
        };
        let stroke = if d.redetected { " stroke=\"black\" stroke-width=\"2\"" } else { "" };
        let title = d.type_id.as_deref().unwrap_or("unmatched");
        s.push_str(&format!(
            "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.1}\" fill=\"{color}\" \
             fill-opacity=\"0.45\"{stroke}><title>{title}</title></circle>\n",
            d.x, d.y, d.r
        ));
    }
    s.push_str("</svg>\n");
    s
}
