use proptest::prelude::*;

use s2s_core::wordvec::{embed_label, load_embeddings, make_orthonormal_table, EmbeddingTable};
use s2s_core::S2sError;

/// Independent reading of the text format: split on whitespace, first field
/// is the token.
fn split_lines(text: &str) -> Vec<(String, Vec<f64>)> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut f = l.split_whitespace();
            let token = f.next().unwrap().to_lowercase();
            (token, f.map(|c| c.parse().unwrap()).collect())
        })
        .collect()
}

fn arb_table_text() -> impl Strategy<Value = String> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::btree_map(
            "[a-z]{1,8}",
            prop::collection::vec(-1e3f64..1e3, dim),
            1..12,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|(k, v)| {
                    format!(
                        "{k} {}\n",
                        v.iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    )
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lookup_matches_line_split_oracle(text in arb_table_text()) {
        let t = EmbeddingTable::read_text(text.as_bytes(), None).unwrap();
        for (token, v) in split_lines(&text) {
            prop_assert_eq!(t.get(&token).unwrap(), v.as_slice());
        }
    }

    #[test]
    fn load_serialize_load_is_exact(text in arb_table_text(), header in any::<bool>()) {
        let t = EmbeddingTable::read_text(text.as_bytes(), None).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf, header).unwrap();
        prop_assert_eq!(EmbeddingTable::read_text(buf.as_slice(), None).unwrap(), t);
    }

    #[test]
    fn orthonormal_tables_have_identity_gram(n in 1usize..12, extra in 0usize..10, seed in any::<u64>()) {
        let labels: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        let t = make_orthonormal_table(&labels, n + extra, seed).unwrap();
        for a in &labels {
            for b in &labels {
                let dot: f64 = t.get(a).unwrap().iter().zip(t.get(b).unwrap()).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn production_header_sets_dimension() {
    let mut text = String::from("2 300\n");
    for w in ["king", "queen"] {
        text.push_str(w);
        for i in 0..300 {
            text.push_str(&format!(" {}", i as f64 / 300.0));
        }
        text.push('\n');
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, text).unwrap();
    let t = load_embeddings(&path, None).unwrap();
    assert_eq!(t.dim(), 300);
    assert!(matches!(
        load_embeddings(&path, Some(200)),
        Err(S2sError::Dimension(_))
    ));
}

#[test]
fn vt60_sized_orthonormal_table() {
    let labels: Vec<String> = (0..37).map(|i| format!("object{i}")).collect();
    let t = make_orthonormal_table(&labels, 300, 7).unwrap();
    let mut worst = 0.0f64;
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            let dot: f64 = t
                .get(a)
                .unwrap()
                .iter()
                .zip(t.get(b).unwrap())
                .map(|(x, y)| x * y)
                .sum();
            worst = worst.max((dot - f64::from(u8::from(i == j))).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
    assert_eq!(t, make_orthonormal_table(&labels, 300, 7).unwrap());
}

#[test]
fn token_mean_matches_hand_oracle() {
    let t = EmbeddingTable::read_text(
        "hair 1 2 3\ndryer 3 2 -1\nbaseball_bat 9 9 9\n".as_bytes(),
        None,
    )
    .unwrap();
    assert_eq!(embed_label(&t, "hair dryer").unwrap(), vec![2.0, 2.0, 1.0]);
    assert_eq!(
        embed_label(&t, "baseball bat").unwrap(),
        vec![9.0, 9.0, 9.0]
    );
    assert_eq!(
        embed_label(&t, "hair dryer").unwrap(),
        embed_label(&t, "Hair  Dryer").unwrap()
    );
    assert!(
        matches!(embed_label(&t, "hair brush"), Err(S2sError::UnknownLabel { token, .. }) if token == "brush")
    );
}
