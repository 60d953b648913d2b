mod support;

use llmie_core::datamodel::{Frame, IEDocument, Relation};
use llmie_core::viz::viz_render;
use proptest::prelude::*;
use support::{check_html, document_strategy, embedded_data, marks_with_text, visible_text};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rendering_is_well_formed_and_faithful(doc in document_strategy(60, 8)) {
        let html = viz_render(&doc);
        if let Err(e) = check_html(&html) {
            prop_assert!(false, "{}", e);
        }
        prop_assert_eq!(visible_text(&html), doc.text.clone());
        let data = embedded_data(&html);
        prop_assert_eq!(data["relations"].as_array().unwrap().len(), doc.relations.len());
        prop_assert_eq!(data["frames"].as_array().unwrap().len(), doc.frames.len());
        // every frame is reachable from at least one highlight
        for f in &doc.frames {
            let needle = format!(" {} ", f.frame_id);
            let found = html.match_indices("data-frame-ids=\"").any(|(i, m)| {
                let rest = &html[i + m.len()..];
                let ids = &rest[..rest.find('"').unwrap()];
                format!(" {ids} ").contains(&needle)
            });
            prop_assert!(found, "frame {} has no highlight", f.frame_id);
        }
    }
}

fn sample_doc() -> IEDocument {
    let mut doc = IEDocument::new("note", "Metformin caused nausea; metformin treats diabetes.");
    doc.frames.push(Frame::new("0001", "Metformin", 0, 9).with_attr("Type", "Drug"));
    doc.frames.push(Frame::new("0002", "nausea", 17, 23).with_attr("Type", "ADE"));
    doc.frames.push(Frame::new("0003", "diabetes", 42, 50).with_attr("Type", "Condition"));
    doc.relations.push(Relation::typed("0002", "0001", "ADE-Drug"));
    doc.relations.push(Relation::typed("0003", "0001", "Condition-Drug"));
    doc
}

#[test]
fn one_highlight_per_disjoint_frame() {
    let doc = sample_doc();
    let html = viz_render(&doc);
    assert_eq!(html.matches("<mark ").count(), 3);
    for f in &doc.frames {
        assert_eq!(marks_with_text(&html, &f.entity_text), 1);
    }
    let data = embedded_data(&html);
    assert_eq!(data["relations"][1]["relation_type"], "Condition-Drug");
    assert!(!html.contains("src=") && !html.contains("href=") && !html.contains("@import"));
}
