//! Planogram parsing and the expected product layout.
//!
//! A planogram names a shelf with `R` rows; each row holds an ordered run of
//! products. The shelf is modelled as the unit square with the origin at the
//! top-left corner, rows split it into equal-height bands top to bottom
//! (row 0 at the top), and each row is split into equal-width product boxes.
//! The expected layout is the set of product-box centers, grouped by type.

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

/// One shelf row: its index and the ordered `(type_id, box)` run inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub index: usize,
    pub products: Vec<(String, Rect)>,
}

/// Parsed planogram: normalized box hierarchy plus the declared type order.
#[derive(Debug, Clone, PartialEq)]
pub struct Planogram {
    /// Always the unit square, kept explicit so projections stay readable.
    pub shelf_box: Rect,
    pub rows: Vec<Row>,
    /// Type identifiers in first-appearance document order.
    pub product_types: Vec<String>,
}

/// Identifies one product box: which row it sits in and its position there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotId {
    pub row: usize,
    pub col: usize,
}

/// Expected points of one product type, in row-major slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct TypePoints {
    pub type_id: String,
    pub points: Vec<Point>,
    pub slots: Vec<SlotId>,
}

/// The expected layout: product-box centers grouped by type.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedLayout {
    /// One entry per type, in the planogram's type order.
    pub sets: Vec<TypePoints>,
    /// Total number of expected products across all types.
    pub total: usize,
}

impl ExpectedLayout {
    pub fn points_of(&self, type_id: &str) -> Option<&TypePoints> {
        self.sets.iter().find(|s| s.type_id == type_id)
    }
}

impl Planogram {
    /// Total number of product boxes.
    pub fn product_count(&self) -> usize {
        self.rows.iter().map(|r| r.products.len()).sum()
    }

    /// All boxes of one type in row-major order, tagged with their slot ids.
    pub fn boxes_of(&self, type_id: &str) -> Vec<(SlotId, Rect)> {
        let mut out = Vec::new();
        for row in &self.rows {
            for (col, (t, rect)) in row.products.iter().enumerate() {
                if t == type_id {
                    out.push((SlotId { row: row.index, col }, *rect));
                }
            }
        }
        out
    }

    /// Canonical XML rendering; `parse_planogram` of the output reproduces
    /// the same box hierarchy.
    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        s.push_str("<planogram version=\"1\">\n");
        s.push_str(&format!("  <shelf rows=\"{}\">\n", self.rows.len()));
        for row in &self.rows {
            s.push_str(&format!("    <row index=\"{}\">", row.index));
            for (t, _) in &row.products {
                s.push_str(&format!(" <product type=\"{}\"/>", xml_escape(t)));
            }
            s.push_str(" </row>\n");
        }
        s.push_str("  </shelf>\n");
        s.push_str("</planogram>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Build a planogram from row type runs, bypassing XML. Used heavily by tests
/// and the synthetic generator.
pub fn planogram_from_rows(rows: &[Vec<String>]) -> Result<Planogram> {
    if rows.is_empty() {
        return Err(Error::Schema("planogram declares zero rows".into()));
    }
    let r = rows.len();
    let mut out_rows = Vec::with_capacity(r);
    let mut product_types: Vec<String> = Vec::new();
    for (i, types) in rows.iter().enumerate() {
        if types.is_empty() {
            return Err(Error::Schema(format!("row {i} has zero products")));
        }
        let y0 = i as f64 / r as f64;
        let y1 = (i + 1) as f64 / r as f64;
        let n = types.len();
        let mut products = Vec::with_capacity(n);
        for (j, t) in types.iter().enumerate() {
            let x0 = j as f64 / n as f64;
            let x1 = (j + 1) as f64 / n as f64;
            products.push((t.clone(), Rect::new(x0, y0, x1, y1)));
            if !product_types.iter().any(|p| p == t) {
                product_types.push(t.clone());
            }
        }
        out_rows.push(Row { index: i, products });
    }
    Ok(Planogram {
        shelf_box: Rect::new(0.0, 0.0, 1.0, 1.0),
        rows: out_rows,
        product_types,
    })
}

/// Parse planogram XML into the box hierarchy.
pub fn parse_planogram(xml_text: &str) -> Result<Planogram> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| {
        let pos = e.pos();
        Error::Parse {
            line: pos.row,
            col: pos.col,
            msg: e.to_string(),
        }
    })?;

    let root = doc.root_element();
    if root.tag_name().name() != "planogram" {
        return Err(Error::Schema(format!(
            "expected <planogram> root, found <{}>",
            root.tag_name().name()
        )));
    }
    match root.attribute("version") {
        Some("1") => {}
        Some(v) => return Err(Error::Schema(format!("unsupported planogram version {v:?}"))),
        None => return Err(Error::Schema("missing planogram version attribute".into())),
    }

    let shelves: Vec<_> = root
        .children()
        .filter(|n| n.is_element())
        .collect();
    if shelves.len() != 1 || shelves[0].tag_name().name() != "shelf" {
        return Err(Error::Schema(
            "planogram must contain exactly one <shelf> element".into(),
        ));
    }
    let shelf = shelves[0];
    let declared_rows: usize = shelf
        .attribute("rows")
        .ok_or_else(|| Error::Schema("missing rows attribute on <shelf>".into()))?
        .parse()
        .map_err(|_| Error::Schema("rows attribute is not an integer".into()))?;
    if declared_rows == 0 {
        return Err(Error::Schema("planogram declares zero rows".into()));
    }

    let row_nodes: Vec<_> = shelf.children().filter(|n| n.is_element()).collect();
    if row_nodes.iter().any(|n| n.tag_name().name() != "row") {
        return Err(Error::Schema("unexpected element inside <shelf>".into()));
    }
    if row_nodes.len() != declared_rows {
        return Err(Error::Schema(format!(
            "shelf declares {declared_rows} rows but contains {}",
            row_nodes.len()
        )));
    }

    let mut row_types: Vec<Vec<String>> = Vec::with_capacity(declared_rows);
    for (doc_order, node) in row_nodes.iter().enumerate() {
        let idx: usize = node
            .attribute("index")
            .ok_or_else(|| Error::Schema(format!("row {doc_order} missing index attribute")))?
            .parse()
            .map_err(|_| Error::Schema(format!("row {doc_order} index is not an integer")))?;
        // document order must carry indices 0..R-1 exactly
        if idx != doc_order {
            return Err(Error::Schema(format!(
                "row index {idx} out of order at document position {doc_order}"
            )));
        }
        let mut types = Vec::new();
        for child in node.children().filter(|n| n.is_element()) {
            if child.tag_name().name() != "product" {
                return Err(Error::Schema(format!(
                    "unexpected element <{}> inside <row>",
                    child.tag_name().name()
                )));
            }
            let t = child
                .attribute("type")
                .ok_or_else(|| Error::Schema("product missing type attribute".into()))?;
            if t.is_empty() {
                return Err(Error::Schema("product type must be non-empty".into()));
            }
            types.push(t.to_string());
        }
        if types.is_empty() {
            return Err(Error::Schema(format!("row {idx} has zero products")));
        }
        row_types.push(types);
    }

    planogram_from_rows(&row_types)
}

/// Expected layout of a planogram: one point per product box center,
/// grouped by type, row-major within each type.
pub fn expected_layout(p: &Planogram) -> ExpectedLayout {
    let mut sets: Vec<TypePoints> = p
        .product_types
        .iter()
        .map(|t| TypePoints {
            type_id: t.clone(),
            points: Vec::new(),
            slots: Vec::new(),
        })
        .collect();
    let mut total = 0;
    for row in &p.rows {
        for (col, (t, rect)) in row.products.iter().enumerate() {
            let set = sets
                .iter_mut()
                .find(|s| &s.type_id == t)
                .expect("type registered during parse");
            set.points.push(rect.center());
            set.slots.push(SlotId { row: row.index, col });
            total += 1;
        }
    }
    ExpectedLayout { sets, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"<planogram version="1">
  <shelf rows="1"> <row index="0"> <product type="A"/> </row> </shelf>
</planogram>"#;

    const TWO_BY_TWO: &str = r#"<planogram version="1">
  <shelf rows="2">
    <row index="0"> <product type="A"/> <product type="A"/> </row>
    <row index="1"> <product type="A"/> <product type="A"/> </row>
  </shelf>
</planogram>"#;

    #[test]
    fn single_product_fills_shelf() {
        let p = parse_planogram(SINGLE).unwrap();
        assert_eq!(p.shelf_box, Rect::new(0.0, 0.0, 1.0, 1.0));
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].products[0].1, Rect::new(0.0, 0.0, 1.0, 1.0));
        let layout = expected_layout(&p);
        assert_eq!(layout.total, 1);
        assert_eq!(layout.sets[0].points, vec![Point::new(0.5, 0.5)]);
    }

    #[test]
    fn two_by_two_centers() {
        // hand evaluation of the uniform subdivision rule
        let p = parse_planogram(TWO_BY_TWO).unwrap();
        let layout = expected_layout(&p);
        assert_eq!(layout.total, 4);
        let pts = &layout.points_of("A").unwrap().points;
        assert_eq!(
            pts,
            &vec![
                Point::new(0.25, 0.25),
                Point::new(0.75, 0.25),
                Point::new(0.25, 0.75),
                Point::new(0.75, 0.75),
            ]
        );
    }

    #[test]
    fn mixed_row_counts_per_type() {
        let p = planogram_from_rows(&[vec!["A".into(), "A".into(), "B".into()]]).unwrap();
        let layout = expected_layout(&p);
        assert_eq!(layout.points_of("A").unwrap().points.len(), 2);
        assert_eq!(layout.points_of("B").unwrap().points.len(), 1);
        assert_eq!(layout.total, 3);
        assert_eq!(p.product_types, vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn truncated_xml_is_parse_error() {
        let err = parse_planogram("<planogram version=\"1\"><shelf rows=\"1\">").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line >= 1),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations() {
        let zero_rows = r#"<planogram version="1"><shelf rows="0"></shelf></planogram>"#;
        assert!(matches!(parse_planogram(zero_rows), Err(Error::Schema(_))));

        let empty_row =
            r#"<planogram version="1"><shelf rows="1"><row index="0"></row></shelf></planogram>"#;
        assert!(matches!(parse_planogram(empty_row), Err(Error::Schema(_))));

        let bad_index = r#"<planogram version="1"><shelf rows="2">
            <row index="1"> <product type="A"/> </row>
            <row index="0"> <product type="A"/> </row>
        </shelf></planogram>"#;
        assert!(matches!(parse_planogram(bad_index), Err(Error::Schema(_))));

        let dup_index = r#"<planogram version="1"><shelf rows="2">
            <row index="0"> <product type="A"/> </row>
            <row index="0"> <product type="A"/> </row>
        </shelf></planogram>"#;
        assert!(matches!(parse_planogram(dup_index), Err(Error::Schema(_))));
    }

    #[test]
    fn roundtrip_preserves_hierarchy() {
        let p = planogram_from_rows(&[
            vec!["A".into(), "B".into(), "A".into()],
            vec!["C".into(), "C".into()],
        ])
        .unwrap();
        let again = parse_planogram(&p.to_xml()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn expected_points_strictly_inside_unit_square() {
        let p = planogram_from_rows(&[
            vec!["A".into(); 7],
            vec!["B".into(); 3],
            vec!["A".into(), "B".into()],
        ])
        .unwrap();
        let layout = expected_layout(&p);
        assert_eq!(layout.total, p.product_count());
        for set in &layout.sets {
            for pt in &set.points {
                assert!(pt.x > 0.0 && pt.x < 1.0 && pt.y > 0.0 && pt.y < 1.0);
            }
        }
    }
}
