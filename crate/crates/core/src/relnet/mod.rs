//! The relatedness network: config, context features, the model and its
//! file format.
//!
//! A candidate word gets its own masked convolution channel. The context
//! sequence (object labels, place labels, caption tokens) feeds two
//! sub-networks: A is four convolution channels flattened without pooling,
//! B is four convolution channels feeding an LSTM whose states are pooled by
//! attention (or reduced to the last state). Both, the candidate features and
//! a projected overlap vector are merged and passed through batch-normalized
//! MLPs to a sigmoid head.

pub mod config;
pub mod context;
pub mod model;
pub mod persist;

pub use config::{ModelConfig, Variant, KERNEL_WIDTHS};
pub use context::{normalize, overlap_features, tokenize, ContextBundle, Label, OverlapVector};
pub use model::{Encoded, Forward, RelatednessModel};
pub use persist::{FORMAT_VERSION, MAGIC};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::layers::EmbeddingTable;
    use crate::seed::rng_for;

    fn table(dim: usize) -> EmbeddingTable {
        let mut rng = rng_for(5, "emb");
        let words = ["airliner", "runway", "plane", "delta", "bus", "street", "a", "on", "the"];
        let rows = words
            .iter()
            .map(|w| {
                let v = (0..dim).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
                (w.to_string(), v)
            })
            .collect();
        EmbeddingTable::from_rows(rows).unwrap()
    }

    fn airport() -> ContextBundle {
        ContextBundle::new(
            vec![Label::new("airliner", 0.9).unwrap()],
            vec![Label::new("runway", 0.8).unwrap()],
            "a plane on the runway",
        )
    }

    fn model(variant: Variant, seed: u64) -> RelatednessModel {
        RelatednessModel::new(ModelConfig::toy(variant), &table(8), &mut rng_for(seed, "init")).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        assert_eq!(model(Variant::Attention, 3), model(Variant::Attention, 3));
        assert_ne!(model(Variant::Attention, 3), model(Variant::Attention, 4));
    }

    #[test]
    fn plain_variant_has_no_attention_or_conv_norms() {
        let plain = model(Variant::Plain, 1);
        assert!(!plain.has_attention() && !plain.has_conv_norms());
        let at = model(Variant::Attention, 1);
        assert!(at.has_attention() && at.has_conv_norms());
        let (a, b) = at.subnetwork_widths();
        assert_eq!(a, [3, 3, 5, 8]);
        assert_eq!(b, [3, 3, 5, 8]);
        assert!(at.num_parameters() > plain.num_parameters());
    }

    #[test]
    fn embedding_width_must_match_config() {
        let r = RelatednessModel::new(ModelConfig::toy(Variant::Plain), &table(6), &mut rng_for(0, "i"));
        assert!(matches!(r, Err(Error::EmbeddingDim { expected: 8, found: 6 })));
    }

    #[test]
    fn scores_lie_strictly_inside_unit_interval() {
        for v in [Variant::Plain, Variant::Attention] {
            let m = model(v, 2);
            for (w, ctx) in [("delta", airport()), ("zzz", ContextBundle::default())] {
                let s = m.score(w, &ctx).unwrap();
                assert!(s > 0.0 && s < 1.0, "{s}");
                assert_eq!(s, m.score(w, &ctx).unwrap());
            }
        }
    }

    #[test]
    fn padded_positions_are_inert() {
        for v in [Variant::Plain, Variant::Attention] {
            let m = model(v, 6);
            let e = m.encode("delta", &airport()).unwrap();
            let mut altered = e.clone();
            for (i, pad) in altered.context_pad.iter().enumerate() {
                if *pad {
                    altered.context[i] = i % 9;
                }
            }
            for (i, pad) in altered.candidate_pad.iter().enumerate() {
                if *pad {
                    altered.candidate[i] = 3;
                }
            }
            assert_ne!(e, altered);
            let batch = [e, altered];
            let s = m.score_encoded(&batch).unwrap();
            assert_eq!(s[0].to_bits(), s[1].to_bits());
        }
    }

    #[test]
    fn empty_candidate_is_rejected_and_long_one_truncated() {
        let m = model(Variant::Plain, 0);
        assert!(m.encode("  ", &airport()).is_err());
        let e = m.encode("delta air lines inc", &airport()).unwrap();
        assert_eq!(e.candidate.len(), 2);
        assert!(e.candidate_pad.iter().all(|p| !p));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let m = model(Variant::Attention, 9);
        let bytes = m.to_bytes().unwrap();
        let back = RelatednessModel::from_bytes(&bytes).unwrap();
        assert_eq!(m, back);
        let a = m.score("delta", &airport()).unwrap();
        let b = back.score("delta", &airport()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupted_file_is_rejected() {
        let bytes = model(Variant::Plain, 1).to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[30] ^= 0x40;
        assert!(matches!(RelatednessModel::from_bytes(&bad), Err(Error::ModelFormat(_))));
        assert!(RelatednessModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong_magic = bytes;
        wrong_magic[0] = b'X';
        assert!(RelatednessModel::from_bytes(&wrong_magic).is_err());
    }

    #[test]
    fn loaded_model_rejects_other_embedding_width() {
        let m = model(Variant::Plain, 1);
        let back = RelatednessModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert!(matches!(
            back.check_embeddings(&table(5)),
            Err(Error::EmbeddingDim { expected: 8, found: 5 })
        ));
        back.check_embeddings(&table(8)).unwrap();
    }
}
