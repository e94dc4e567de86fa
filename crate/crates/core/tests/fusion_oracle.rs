//! Dual-index fusion against an exhaustive scorer, and the fusion invariants.

use std::collections::{BTreeMap, BTreeSet};

use covex_core::backend::Embedder;
use covex_core::corpus::{Document, ExpandedDocument};
use covex_core::dense::{
    build_query_index, build_text_index, search_fused, search_text, FusionParams, QueryIndex, Similarity, TextIndex,
};
use covex_core::stub::StubEmbedder;
use covex_core::vector::{dot, Embedding};
use proptest::prelude::*;

const DIM: usize = 16;

fn corpus(n_docs: usize, queries_per_doc: usize, salt: u64) -> (TextIndex, QueryIndex, Vec<ExpandedDocument>) {
    let emb = StubEmbedder::new(DIM);
    let docs: Vec<Document> = (0..n_docs)
        .map(|i| Document::new(format!("doc{i:03}"), "", format!("document {i} salt {salt}")))
        .collect();
    let exps: Vec<ExpandedDocument> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| ExpandedDocument {
            doc_id: d.doc_id.clone(),
            queries: (0..1 + (i + salt as usize) % queries_per_doc)
                .map(|q| format!("query {q} of {i} salt {salt}"))
                .collect(),
        })
        .collect();
    let ti = build_text_index(&docs, true, &emb, 32).unwrap();
    let qi = build_query_index(&exps, &emb, 32).unwrap();
    (ti, qi, exps)
}

/// Scores every document with the full formula: text similarity plus the
/// best similarity among its own generated queries.
fn exhaustive(v: &Embedding, ti: &TextIndex, exps: &[ExpandedDocument], alpha: f64) -> Vec<(String, f64)> {
    let emb = StubEmbedder::new(DIM);
    let mut scored: Vec<(String, f64)> = ti
        .doc_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s_t = dot(v.values(), ti.vector(i));
            let e = exps.iter().find(|e| &e.doc_id == id).unwrap();
            let s_q = e
                .queries
                .iter()
                .map(|q| dot(v.values(), emb.embed(q).unwrap().values()))
                .fold(f64::NEG_INFINITY, f64::max);
            (id.clone(), (1.0 - alpha) * s_t + alpha * s_q)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

#[test]
fn uncapped_fusion_equals_exhaustive_oracle() {
    let (ti, qi, exps) = corpus(200, 4, 0);
    let emb = StubEmbedder::new(DIM);
    for probe in ["alpha probe", "beta probe", "gamma probe"] {
        let v = emb.embed(probe).unwrap();
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let params = FusionParams { alpha, n_t: usize::MAX, n_q: usize::MAX, similarity: Similarity::InnerProduct };
            let got = search_fused(&v, &ti, &qi, &params, 200).unwrap();
            let want = exhaustive(&v, &ti, &exps, alpha);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.doc_id, w.0, "alpha {alpha}");
                assert!((g.s - w.1).abs() < 1e-12, "alpha {alpha}");
            }
        }
    }
}

fn params() -> impl Strategy<Value = (f64, usize, usize, u64)> {
    (0.0f64..=1.0, 1usize..40, 1usize..80, 0u64..1000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fused_score_is_convex_and_candidates_are_exact((alpha, n_t, n_q, salt) in params()) {
        let (ti, qi, _) = corpus(30, 3, salt);
        let v = StubEmbedder::new(DIM).embed(&format!("probe {salt}")).unwrap();
        let p = FusionParams { alpha, n_t, n_q, similarity: Similarity::InnerProduct };
        let hits = search_fused(&v, &ti, &qi, &p, usize::MAX).unwrap();

        let text = search_text(&v, &ti, Similarity::InnerProduct, n_t).unwrap();
        let mut q_scores: Vec<(f64, usize)> =
            (0..qi.len()).map(|j| (dot(v.values(), qi.vector(j)), j)).collect();
        q_scores.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut expected: BTreeSet<String> = text.iter().map(|h| h.doc_id.clone()).collect();
        expected.extend(q_scores.iter().take(n_q).map(|&(_, j)| qi.doc_of(j).to_string()));
        let got: BTreeSet<String> = hits.iter().map(|h| h.doc_id.clone()).collect();
        prop_assert_eq!(got, expected);

        for h in &hits {
            prop_assert!((h.s - ((1.0 - alpha) * h.s_t + alpha * h.s_q)).abs() < 1e-12);
            prop_assert!(h.s >= h.s_t.min(h.s_q) - 1e-12 && h.s <= h.s_t.max(h.s_q) + 1e-12);
        }
        prop_assert!(hits.windows(2).all(|w| w[0].s > w[1].s || (w[0].s == w[1].s && w[0].doc_id < w[1].doc_id)));
    }

    #[test]
    fn enlarging_depths_never_drops_candidates((alpha, n_t, n_q, salt) in params(), dt in 0usize..10, dq in 0usize..20) {
        let (ti, qi, _) = corpus(25, 3, salt);
        let v = StubEmbedder::new(DIM).embed(&format!("probe {salt}")).unwrap();
        let small = FusionParams { alpha, n_t, n_q, similarity: Similarity::InnerProduct };
        let large = FusionParams { n_t: n_t + dt, n_q: n_q + dq, ..small };
        let a: BTreeSet<String> = search_fused(&v, &ti, &qi, &small, usize::MAX).unwrap().into_iter().map(|h| h.doc_id).collect();
        let b: BTreeSet<String> = search_fused(&v, &ti, &qi, &large, usize::MAX).unwrap().into_iter().map(|h| h.doc_id).collect();
        prop_assert!(a.is_subset(&b));
    }

    #[test]
    fn alpha_one_ignores_document_vectors(salt in 0u64..1000, shift in 1usize..25) {
        let (ti, qi, _) = corpus(25, 3, salt);
        let v = StubEmbedder::new(DIM).embed(&format!("probe {salt}")).unwrap();
        // Rotate the document vectors relative to their ids.
        let n = ti.len();
        let mut rotated = Vec::with_capacity(ti.raw_vectors().len());
        for i in 0..n {
            rotated.extend_from_slice(ti.vector((i + shift) % n));
        }
        let permuted = TextIndex::from_raw(DIM, ti.doc_ids().to_vec(), rotated).unwrap();
        let p = FusionParams { alpha: 1.0, n_t: usize::MAX, n_q: 40, similarity: Similarity::InnerProduct };
        let a: Vec<(String, f64)> = search_fused(&v, &ti, &qi, &p, 10).unwrap().into_iter().map(|h| (h.doc_id, h.s)).collect();
        let b: Vec<(String, f64)> = search_fused(&v, &permuted, &qi, &p, 10).unwrap().into_iter().map(|h| (h.doc_id, h.s)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn inner_product_and_cosine_agree_on_unit_vectors((alpha, n_t, n_q, salt) in params()) {
        let (ti, qi, _) = corpus(20, 3, salt);
        let v = StubEmbedder::new(DIM).embed(&format!("probe {salt}")).unwrap();
        let ip = FusionParams { alpha, n_t, n_q, similarity: Similarity::InnerProduct };
        let cos = FusionParams { similarity: Similarity::Cosine, ..ip };
        let a: Vec<String> = search_fused(&v, &ti, &qi, &ip, 20).unwrap().into_iter().map(|h| h.doc_id).collect();
        let b: Vec<String> = search_fused(&v, &ti, &qi, &cos, 20).unwrap().into_iter().map(|h| h.doc_id).collect();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn alpha_zero_matches_text_scores() {
    let (ti, qi, _) = corpus(200, 4, 7);
    let v = StubEmbedder::new(DIM).embed("zero probe").unwrap();
    let p = FusionParams { alpha: 0.0, n_t: usize::MAX, n_q: usize::MAX, similarity: Similarity::InnerProduct };
    let fused = search_fused(&v, &ti, &qi, &p, 1000).unwrap();
    let text = search_text(&v, &ti, Similarity::InnerProduct, 1000).unwrap();
    let f: BTreeMap<_, _> = fused.iter().map(|h| (h.doc_id.clone(), h.s)).collect();
    assert_eq!(fused.len(), text.len());
    for (a, b) in fused.iter().zip(&text) {
        assert_eq!(a.doc_id, b.doc_id);
        assert_eq!(f[&b.doc_id], b.score);
    }
}
