//! Token-budget and scaling calculators.
//!
//! * compute-optimal tokens: `T = 20 · P`
//! * text size ↔ tokens: one billion tokens ≈ 3–4 GB of processed text
//! * data-regime classification by corpus size
//! * analytic parameter counts for a LLaMA-style decoder

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tokens per parameter at the compute-optimal point.
pub const CHINCHILLA_RATIO: u64 = 20;
/// Gigabytes of processed text per billion tokens, low and high end.
pub const GB_PER_BILLION_TOKENS_LOW: f64 = 3.0;
pub const GB_PER_BILLION_TOKENS_HIGH: f64 = 4.0;

const BILLION: f64 = 1e9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BudgetError {
    #[error("parameter count must be positive")]
    ZeroParams,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
}

/// Size of a model, either given directly or derived from its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Params(u64),
    Architecture(ArchitectureSpec),
}

impl ModelSpec {
    pub fn params(&self) -> Result<u64, BudgetError> {
        let p = match self {
            ModelSpec::Params(p) => *p,
            ModelSpec::Architecture(a) => estimate_params(a)?,
        };
        if p == 0 {
            return Err(BudgetError::ZeroParams);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub d_model: u64,
    pub layers: u64,
    pub heads: u64,
    pub kv_heads: u64,
    pub ffn_dim: u64,
    pub vocab: u64,
    pub tied_embeddings: bool,
    pub context_length: u64,
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<(), BudgetError> {
        let bad = |m: &str| Err(BudgetError::InvalidArchitecture(m.to_string()));
        if self.d_model == 0
            || self.heads == 0
            || self.kv_heads == 0
            || self.ffn_dim == 0
            || self.vocab == 0
            || self.context_length == 0
        {
            return bad("dimensions must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad("heads must divide d_model");
        }
        if !self.heads.is_multiple_of(self.kv_heads) {
            return bad("kv_heads must divide heads");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> u64 {
        self.d_model / self.heads
    }

    /// Parameters of one decoder block: q/o projections, k/v projections
    /// (narrower under grouped-query attention), a gated three-matrix
    /// feed-forward, and two RMSNorm gains. No biases.
    pub fn params_per_layer(&self) -> u64 {
        let d = self.d_model;
        let kv_width = self.kv_heads * self.head_dim();
        let attention = 2 * d * d + 2 * d * kv_width;
        let feed_forward = 3 * d * self.ffn_dim;
        let norms = 2 * d;
        attention + feed_forward + norms
    }

    pub fn embedding_params(&self) -> u64 {
        let tables = if self.tied_embeddings { 1 } else { 2 };
        tables * self.vocab * self.d_model
    }
}

/// Compute-optimal training tokens for `params` parameters.
pub fn chinchilla_tokens(params: u64) -> Result<u64, BudgetError> {
    if params == 0 {
        return Err(BudgetError::ZeroParams);
    }
    Ok(CHINCHILLA_RATIO * params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbBand {
    pub gb_low: f64,
    pub gb_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBand {
    pub tokens_low: f64,
    pub tokens_high: f64,
}

impl TokenBand {
    pub fn contains(&self, tokens: f64) -> bool {
        self.tokens_low <= tokens && tokens <= self.tokens_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub tokens: u64,
    pub band: GbBand,
}

pub fn tokens_to_gb(tokens: u64) -> GbBand {
    let t = tokens as f64;
    GbBand { gb_low: GB_PER_BILLION_TOKENS_LOW * t / BILLION, gb_high: GB_PER_BILLION_TOKENS_HIGH * t / BILLION }
}

/// Token band for `gb` gigabytes of processed text. Negative input is
/// treated as zero.
pub fn gb_to_tokens(gb: f64) -> TokenBand {
    let gb = gb.max(0.0);
    TokenBand {
        tokens_low: gb / GB_PER_BILLION_TOKENS_HIGH * BILLION,
        tokens_high: gb / GB_PER_BILLION_TOKENS_LOW * BILLION,
    }
}

pub fn token_budget(tokens: u64) -> TokenBudget {
    TokenBudget { tokens, band: tokens_to_gb(tokens) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataRegime {
    TooSmall,
    Borderline,
    Suitable,
    Ample,
}

impl DataRegime {
    pub fn describe(self) -> &'static str {
        match self {
            DataRegime::TooSmall => "too small for pretraining; fine-tuning scale",
            DataRegime::Borderline => "borderline; many epochs, overfitting risk",
            DataRegime::Suitable => "suitable for ~1.5B-parameter compute-efficient pretraining",
            DataRegime::Ample => "ample; supports larger models or fewer epochs",
        }
    }
}

/// `<10` → TooSmall, `[10, 50]` → Borderline, `(50, 300]` → Suitable,
/// `>300` → Ample.
pub fn classify_regime(gb: f64) -> DataRegime {
    if gb < 10.0 {
        DataRegime::TooSmall
    } else if gb <= 50.0 {
        DataRegime::Borderline
    } else if gb <= 300.0 {
        DataRegime::Suitable
    } else {
        DataRegime::Ample
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingRegime {
    UnderTrained,
    ComputeOptimal,
    DataRich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokensPerParam {
    pub ratio: f64,
    pub regime: TrainingRegime,
}

pub fn tokens_per_param(tokens: u64, params: u64) -> Result<TokensPerParam, BudgetError> {
    if params == 0 {
        return Err(BudgetError::ZeroParams);
    }
    let ratio = tokens as f64 / params as f64;
    // Compare in integers so the boundary is exact.
    let scaled = tokens as u128;
    let optimal = CHINCHILLA_RATIO as u128 * params as u128;
    let regime = match scaled.cmp(&optimal) {
        std::cmp::Ordering::Less => TrainingRegime::UnderTrained,
        std::cmp::Ordering::Equal => TrainingRegime::ComputeOptimal,
        std::cmp::Ordering::Greater => TrainingRegime::DataRich,
    };
    Ok(TokensPerParam { ratio, regime })
}

/// Analytic parameter count:
///
/// ```text
/// embeddings  (tied ? 1 : 2) · vocab · d
/// per layer   2·d² + 2·d·(kv_heads · d/heads)   attention (= 4·d² for MHA)
///             3·d·ffn                           gated feed-forward
///             2·d                               RMSNorm gains
/// final norm  d
/// ```
pub fn estimate_params(arch: &ArchitectureSpec) -> Result<u64, BudgetError> {
    arch.validate()?;
    Ok(arch.embedding_params() + arch.layers * arch.params_per_layer() + arch.d_model)
}

/// Combined plan used by the CLI `budget` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub params: Option<u64>,
    pub chinchilla_tokens: Option<TokenBudget>,
    pub tokens: Option<TokenBudget>,
    pub tokens_per_param: Option<TokensPerParam>,
    pub corpus_gb: Option<f64>,
    pub corpus_tokens: Option<TokenBand>,
    pub regime: Option<DataRegime>,
}

pub fn plan(model: Option<&ModelSpec>, tokens: Option<u64>, gb: Option<f64>) -> Result<BudgetPlan, BudgetError> {
    let params = model.map(|m| m.params()).transpose()?;
    let chinchilla = params.map(chinchilla_tokens).transpose()?.map(token_budget);
    let tpp = match (tokens, params) {
        (Some(t), Some(p)) => Some(tokens_per_param(t, p)?),
        _ => None,
    };
    Ok(BudgetPlan {
        params,
        chinchilla_tokens: chinchilla,
        tokens: tokens.map(token_budget),
        tokens_per_param: tpp,
        corpus_gb: gb,
        corpus_tokens: gb.map(gb_to_tokens),
        regime: gb.map(classify_regime),
    })
}

impl BudgetPlan {
    /// Two-column text rendering of the populated fields.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(&str, String)> = Vec::new();
        if let Some(p) = self.params {
            rows.push(("parameters", format!("{p} ({:.2}B)", p as f64 / BILLION)));
        }
        if let Some(c) = &self.chinchilla_tokens {
            rows.push(("compute-optimal tokens", format!("{} ({:.1}B)", c.tokens, c.tokens as f64 / BILLION)));
            rows.push(("  clean text needed", format!("{:.1} to {:.1} GB", c.band.gb_low, c.band.gb_high)));
        }
        if let Some(t) = &self.tokens {
            rows.push(("planned tokens", format!("{} ({:.1}B)", t.tokens, t.tokens as f64 / BILLION)));
            rows.push(("  clean text needed", format!("{:.1} to {:.1} GB", t.band.gb_low, t.band.gb_high)));
        }
        if let Some(r) = &self.tokens_per_param {
            rows.push(("tokens per parameter", format!("{:.2} ({:?})", r.ratio, r.regime)));
        }
        if let (Some(gb), Some(band)) = (self.corpus_gb, &self.corpus_tokens) {
            rows.push(("corpus", format!("{gb} GB")));
            rows.push((
                "  token yield",
                format!("{:.2}B to {:.2}B", band.tokens_low / BILLION, band.tokens_high / BILLION),
            ));
        }
        if let Some(r) = self.regime {
            rows.push(("  regime", format!("{r:?}: {}", r.describe())));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn reference_arch() -> ArchitectureSpec {
        ArchitectureSpec {
            d_model: 2048,
            layers: 24,
            heads: 16,
            kv_heads: 16,
            ffn_dim: 5504,
            vocab: 102_400,
            tied_embeddings: false,
            context_length: 4096,
        }
    }

    #[test]
    fn table_lists_populated_fields() {
        let t = plan(Some(&ModelSpec::Params(7_000_000_000)), None, Some(20.0)).unwrap().render_table();
        assert!(t.contains("140000000000 (140.0B)"));
        assert!(t.contains("Borderline"));
        assert!(!t.contains("planned tokens"));
    }

    #[test]
    fn chinchilla_examples() {
        assert_eq!(chinchilla_tokens(1_360_000_000).unwrap(), 27_200_000_000);
        assert_eq!(chinchilla_tokens(1).unwrap(), 20);
        assert_eq!(chinchilla_tokens(70_000_000_000).unwrap(), 1_400_000_000_000);
        assert_eq!(chinchilla_tokens(0), Err(BudgetError::ZeroParams));
    }

    #[test]
    fn gb_bands() {
        assert_eq!(tokens_to_gb(40_000_000_000), GbBand { gb_low: 120.0, gb_high: 160.0 });
        assert_eq!(tokens_to_gb(140_000_000_000), GbBand { gb_low: 420.0, gb_high: 560.0 });
        assert_eq!(tokens_to_gb(0), GbBand { gb_low: 0.0, gb_high: 0.0 });
    }

    #[test]
    fn token_bands() {
        let b = gb_to_tokens(200.0);
        assert_eq!(b.tokens_low, 50e9);
        assert!((b.tokens_high - 66.666_666_7e9).abs() < 1e3);
        assert!(b.contains(52.18e9));
        assert_eq!(gb_to_tokens(0.0), TokenBand { tokens_low: 0.0, tokens_high: 0.0 });
        let b = gb_to_tokens(3.5);
        assert!((b.tokens_low - 0.875e9).abs() < 1.0);
        assert!((b.tokens_high - 1.1666667e9).abs() < 1e2);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(5.0), DataRegime::TooSmall);
        assert_eq!(classify_regime(35.0), DataRegime::Borderline);
        assert_eq!(classify_regime(200.0), DataRegime::Suitable);
        assert_eq!(classify_regime(10.0), DataRegime::Borderline);
        assert_eq!(classify_regime(50.0), DataRegime::Borderline);
        assert_eq!(classify_regime(300.0), DataRegime::Suitable);
        assert_eq!(classify_regime(300.5), DataRegime::Ample);
    }

    #[test]
    fn tokens_per_param_examples() {
        let r = tokens_per_param(52_180_000_000, 1_360_000_000).unwrap();
        assert!((r.ratio - 38.37).abs() < 0.005);
        assert_eq!(r.regime, TrainingRegime::DataRich);
        let r = tokens_per_param(20 * 777, 777).unwrap();
        assert_eq!(r.ratio, 20.0);
        assert_eq!(r.regime, TrainingRegime::ComputeOptimal);
        let r = tokens_per_param(0, 5).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.regime, TrainingRegime::UnderTrained);
    }

    #[test]
    fn reference_architecture_param_count() {
        // 2·102400·2048 + 24·(4·2048² + 3·2048·5504 + 2·2048) + 2048
        assert_eq!(estimate_params(&reference_arch()).unwrap(), 1_633_781_760);
        let tied = ArchitectureSpec { tied_embeddings: true, ..reference_arch() };
        assert_eq!(estimate_params(&tied).unwrap(), 1_633_781_760 - 102_400 * 2048);
    }

    #[test]
    fn degenerate_unit_architecture() {
        let arch = ArchitectureSpec {
            d_model: 1,
            layers: 0,
            heads: 1,
            kv_heads: 1,
            ffn_dim: 1,
            vocab: 1,
            tied_embeddings: true,
            context_length: 1,
        };
        assert_eq!(estimate_params(&arch).unwrap(), 2);
    }

    #[test]
    fn doubling_layers_adds_one_stack() {
        let a = reference_arch();
        let b = ArchitectureSpec { layers: 48, ..a.clone() };
        let per = 4 * 2048 * 2048 + 3 * 2048 * 5504 + 2 * 2048;
        assert_eq!(estimate_params(&b).unwrap() - estimate_params(&a).unwrap(), 24 * per);
    }

    #[test]
    fn invalid_architectures() {
        let a = ArchitectureSpec { heads: 3, ..reference_arch() };
        assert!(estimate_params(&a).is_err());
        let a = ArchitectureSpec { kv_heads: 5, ..reference_arch() };
        assert!(estimate_params(&a).is_err());
        let a = ArchitectureSpec { vocab: 0, ..reference_arch() };
        assert!(estimate_params(&a).is_err());
    }

    #[test]
    fn plan_combines_everything() {
        let p = plan(Some(&ModelSpec::Params(1_360_000_000)), Some(52_180_000_000), Some(200.0)).unwrap();
        assert_eq!(p.chinchilla_tokens.unwrap().tokens, 27_200_000_000);
        assert_eq!(p.regime, Some(DataRegime::Suitable));
        assert_eq!(p.tokens_per_param.unwrap().regime, TrainingRegime::DataRich);
    }

    proptest! {
        #[test]
        fn chinchilla_is_additive(a in 1u64..1_000_000_000_000, b in 1u64..1_000_000_000_000) {
            prop_assert_eq!(
                chinchilla_tokens(a + b).unwrap(),
                chinchilla_tokens(a).unwrap() + chinchilla_tokens(b).unwrap()
            );
        }

        #[test]
        fn band_roundtrip_contains_original(t in 0u64..10_000_000_000_000) {
            let band = tokens_to_gb(t);
            let mid = (band.gb_low + band.gb_high) / 2.0;
            let back = gb_to_tokens(mid);
            let t = t as f64;
            prop_assert!(back.tokens_low <= t * (1.0 + 1e-12) && t <= back.tokens_high * (1.0 + 1e-12));
        }

        #[test]
        fn gb_inverse_consistency(g in 0.0f64..1e6) {
            let b = gb_to_tokens(g);
            let eps = 1e-9 * (1.0 + g);
            prop_assert!(tokens_to_gb(b.tokens_low.round() as u64).gb_high + eps >= g - 4.0 / 1e9);
            prop_assert!(tokens_to_gb(b.tokens_high.round() as u64).gb_low <= g + eps + 3.0 / 1e9);
        }

        #[test]
        fn regime_is_monotone(a in 0.0f64..1000.0, b in 0.0f64..1000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_regime(lo) <= classify_regime(hi));
        }

        #[test]
        fn params_strictly_increase_per_field(
            d_heads in 1u64..8, heads_pow in 0u32..4, layers in 1u64..8,
            ffn in 1u64..64, vocab in 1u64..512, tied in any::<bool>()
        ) {
            let heads = 1u64 << heads_pow;
            let base = ArchitectureSpec {
                d_model: d_heads * heads, layers, heads, kv_heads: 1, ffn_dim: ffn,
                vocab, tied_embeddings: tied, context_length: 16,
            };
            let p = estimate_params(&base).unwrap();
            let bumps = [
                ArchitectureSpec { d_model: base.d_model + heads, ..base.clone() },
                ArchitectureSpec { layers: layers + 1, ..base.clone() },
                ArchitectureSpec { ffn_dim: ffn + 1, ..base.clone() },
                ArchitectureSpec { vocab: vocab + 1, ..base.clone() },
            ];
            for b in &bumps {
                let q = estimate_params(b).unwrap();
                prop_assert!(q > p);
            }
            if heads > 1 {
                let more_kv = ArchitectureSpec { kv_heads: 2, ..base.clone() };
                prop_assert!(estimate_params(&more_kv).unwrap() > p);
            }
            if tied {
                let untied = ArchitectureSpec { tied_embeddings: false, ..base.clone() };
                prop_assert!(estimate_params(&untied).unwrap() > p);
            }
        }
    }
}
