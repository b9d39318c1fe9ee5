//! Analytic forward-pass FLOPs of an encoder → connector → decoder pipeline.
//!
//! A multiply-accumulate counts as two FLOPs. Per transformer layer over `n`
//! tokens of width `d` with MLP width `f`:
//!
//! * projections (Q, K, V, output): `8·n·d²`
//! * attention scores and weighted values: `4·n²·d`
//! * MLP: `4·n·d·f`

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineProfile {
    pub name: String,
    pub vis_layers: u64,
    pub vis_dim: u64,
    pub vis_ffn: u64,
    pub vis_heads: u64,
    /// Encoder patches folded into one decoder token.
    pub merge_factor: u64,
    pub llm_layers: u64,
    pub llm_dim: u64,
    pub llm_ffn: u64,
    /// Prompt tokens prefilled alongside the visual tokens.
    pub text_tokens: u64,
}

/// FLOPs of one layer split by term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LayerFlops {
    pub projections: u128,
    pub attention: u128,
    pub mlp: u128,
}

impl LayerFlops {
    pub fn new(n: u64, dim: u64, ffn: u64) -> Self {
        let (n, d, f) = (n as u128, dim as u128, ffn as u128);
        Self { projections: 8 * n * d * d, attention: 4 * n * n * d, mlp: 4 * n * d * f }
    }

    pub fn total(&self) -> u128 {
        self.projections + self.attention + self.mlp
    }
}

impl PipelineProfile {
    /// Roughly a 3B-parameter vision-language model. Placeholder dimensions.
    pub fn like_3b() -> Self {
        Self {
            name: "3b-like".into(),
            vis_layers: 32,
            vis_dim: 1280,
            vis_ffn: 3420,
            vis_heads: 16,
            merge_factor: 4,
            llm_layers: 36,
            llm_dim: 2048,
            llm_ffn: 11008,
            text_tokens: 64,
        }
    }

    /// Same encoder with a larger decoder.
    pub fn like_7b() -> Self {
        Self { name: "7b-like".into(), llm_layers: 28, llm_dim: 3584, llm_ffn: 18944, ..Self::like_3b() }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "3b-like" => Some(Self::like_3b()),
            "7b-like" => Some(Self::like_7b()),
            _ => None,
        }
    }

    /// A built-in name, or else a path to a JSON profile.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(p) = Self::builtin(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if !path.is_file() {
            return Err(Error::Config(format!("unknown profile {name_or_path:?}")));
        }
        let profile: Self = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| Error::Config(format!("profile {}: {e}", path.display())))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.vis_layers,
            self.vis_dim,
            self.vis_ffn,
            self.vis_heads,
            self.merge_factor,
            self.llm_layers,
            self.llm_dim,
            self.llm_ffn,
        ];
        if counts.contains(&0) {
            return Err(Error::Config(format!("profile {:?} has a zero dimension", self.name)));
        }
        Ok(())
    }

    pub fn encoder_layer(&self, n_patches: u64) -> LayerFlops {
        LayerFlops::new(n_patches, self.vis_dim, self.vis_ffn)
    }

    pub fn decoder_layer(&self, n_tokens: u64) -> LayerFlops {
        LayerFlops::new(n_tokens, self.llm_dim, self.llm_ffn)
    }

    pub fn flops_encoder(&self, n_patches: u64) -> u128 {
        self.vis_layers as u128 * self.encoder_layer(n_patches).total()
    }

    pub fn flops_decoder_prefill(&self, n_visual: u64, n_text: u64) -> u128 {
        self.llm_layers as u128 * self.decoder_layer(n_visual + n_text).total()
    }

    /// Decoder tokens produced from `n_patches` encoder patches.
    pub fn visual_tokens(&self, n_patches: u64) -> u64 {
        n_patches.div_ceil(self.merge_factor)
    }

    /// Encoder plus decoder prefill for an image with `n_patches` patches kept.
    pub fn pipeline_flops(&self, n_patches: u64) -> u128 {
        self.flops_encoder(n_patches) + self.flops_decoder_prefill(self.visual_tokens(n_patches), self.text_tokens)
    }

    pub fn reduction_report(&self, total_patches: u64, retained_patches: u64) -> Result<ReductionReport> {
        if total_patches == 0 || retained_patches > total_patches {
            return Err(Error::Config(format!("{retained_patches} retained of {total_patches} patches")));
        }
        let r = retained_patches as f64 / total_patches as f64;
        let original = self.pipeline_flops(total_patches);
        let pruned = self.pipeline_flops(retained_patches);
        Ok(ReductionReport {
            token_reduction: 100.0 * (1.0 - r),
            flops_reduction: 100.0 * (1.0 - pruned as f64 / original as f64),
            original_flops: original,
            pruned_flops: pruned,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    /// Percent.
    pub token_reduction: f64,
    /// Percent.
    pub flops_reduction: f64,
    pub original_flops: u128,
    pub pruned_flops: u128,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(layers: u64, text: u64) -> PipelineProfile {
        PipelineProfile {
            name: "unit".into(),
            vis_layers: layers,
            vis_dim: 1,
            vis_ffn: 1,
            vis_heads: 1,
            merge_factor: 1,
            llm_layers: layers,
            llm_dim: 1,
            llm_ffn: 1,
            text_tokens: text,
        }
    }

    #[test]
    fn hand_instances() {
        let p = unit(1, 0);
        assert_eq!(p.flops_encoder(0), 0);
        assert_eq!(p.flops_encoder(2), 40);
        assert_eq!(p.flops_decoder_prefill(0, 0), 0);
        assert_eq!(p.flops_decoder_prefill(3, 0), 72);
        assert_eq!(p.flops_decoder_prefill(1, 2), 72);
    }

    #[test]
    fn attention_term_is_quadratic() {
        let p = PipelineProfile::like_3b();
        for n in [1u64, 7, 100, 2803] {
            let a = p.encoder_layer(n);
            let b = p.encoder_layer(2 * n);
            assert_eq!(b.attention, 4 * a.attention);
            assert_eq!(b.projections, 2 * a.projections);
            assert_eq!(b.mlp, 2 * a.mlp);
        }
    }

    #[test]
    fn decoder_monotone_in_visual_tokens() {
        let p = PipelineProfile::like_7b();
        let mut prev = p.flops_decoder_prefill(0, p.text_tokens);
        for n in 1..200 {
            let f = p.flops_decoder_prefill(n, p.text_tokens);
            assert!(f > prev);
            prev = f;
        }
    }

    #[test]
    fn report_edges() {
        let p = PipelineProfile::like_3b();
        let full = p.reduction_report(1000, 1000).unwrap();
        assert_eq!((full.token_reduction, full.flops_reduction), (0.0, 0.0));
        let zero = PipelineProfile { text_tokens: 0, ..p.clone() }.reduction_report(1000, 0).unwrap();
        assert_eq!(zero.flops_reduction, 100.0);
        assert!(p.reduction_report(0, 0).is_err());
        assert!(p.reduction_report(5, 6).is_err());
    }

    #[test]
    fn builtin_profiles_resolve() {
        assert_eq!(PipelineProfile::resolve("3b-like").unwrap(), PipelineProfile::like_3b());
        assert_eq!(PipelineProfile::resolve("7b-like").unwrap().llm_dim, 3584);
        assert!(matches!(PipelineProfile::resolve("nope"), Err(Error::Config(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let custom = PipelineProfile { name: "custom".into(), ..unit(2, 5) };
        std::fs::write(&path, serde_json::to_string(&custom).unwrap()).unwrap();
        assert_eq!(PipelineProfile::resolve(path.to_str().unwrap()).unwrap(), custom);
    }

    fn arb_profile() -> impl Strategy<Value = PipelineProfile> {
        (1u64..40, 1u64..4096, 1u64..16384, 1u64..8, 1u64..40, 1u64..4096, 1u64..20000).prop_map(
            |(vl, vd, vf, m, ll, ld, lf)| PipelineProfile {
                name: "arb".into(),
                vis_layers: vl,
                vis_dim: vd,
                vis_ffn: vf,
                vis_heads: 1,
                merge_factor: m,
                llm_layers: ll,
                llm_dim: ld,
                llm_ffn: lf,
                text_tokens: 0,
            },
        )
    }

    proptest! {
        // Counts are multiples of the merge factor so the connector's ceiling is exact.
        #[test]
        fn reduction_bounds(p in arb_profile(), groups in 1u64..3000, frac in 0.0f64..=1.0) {
            let total = groups * p.merge_factor;
            let retained_groups = ((groups as f64 * frac).round() as u64).clamp(1, groups);
            let retained = retained_groups * p.merge_factor;
            let rep = p.reduction_report(total, retained).unwrap();
            let r = retained as f64 / total as f64;
            let lo = 100.0 * (1.0 - r);
            let hi = 100.0 * (1.0 - r * r);
            prop_assert!(rep.flops_reduction >= lo - 1e-9, "{} < {}", rep.flops_reduction, lo);
            prop_assert!(rep.flops_reduction <= hi + 1e-9, "{} > {}", rep.flops_reduction, hi);
            prop_assert!(rep.flops_reduction >= rep.token_reduction - 1e-9);
        }

        #[test]
        fn reduction_is_invariant_to_depth_scaling(p in arb_profile(), total in 1u64..5000, frac in 0.0f64..=1.0, k in 2u64..6) {
            let retained = (total as f64 * frac) as u64;
            let deeper = PipelineProfile { vis_layers: p.vis_layers * k, llm_layers: p.llm_layers * k, ..p.clone() };
            let a = p.reduction_report(total, retained).unwrap();
            let b = deeper.reduction_report(total, retained).unwrap();
            prop_assert_eq!(b.original_flops, a.original_flops * k as u128);
            let tol = 1e-9 * a.flops_reduction.abs().max(1e-9);
            prop_assert!((a.flops_reduction - b.flops_reduction).abs() <= tol);
        }

        #[test]
        fn terms_are_homogeneous_in_width(n in 0u64..5000, d in 1u64..4096, f in 1u64..16384, k in 2u64..5) {
            let a = LayerFlops::new(n, d, f);
            let b = LayerFlops::new(n, d * k, f * k);
            prop_assert_eq!(b.projections, a.projections * (k * k) as u128);
            prop_assert_eq!(b.mlp, a.mlp * (k * k) as u128);
            prop_assert_eq!(b.attention, a.attention * k as u128);
        }
    }
}
