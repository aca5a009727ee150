use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::TokenizerModel;
use super::TokenizerError;

/// model_type → tokenizer families it is known to load correctly.
pub const MODEL_TYPE_FAMILIES: &[(&str, &[&str])] = &[
    ("llama", &["llama"]),
    ("codellama", &["llama", "codellama"]),
    ("mistral", &["llama", "mistral"]),
    ("mixtral", &["llama", "mistral", "mixtral"]),
    ("deepseek", &["deepseek", "llama"]),
    ("deepseek_v2", &["deepseek", "llama"]),
    ("gpt2", &["gpt2"]),
    ("gpt_neox", &["gptneox"]),
    ("qwen2", &["qwen2"]),
    ("gemma", &["gemma"]),
    ("t5", &["t5"]),
    ("bert", &["bert"]),
    ("phi", &["codegen", "gpt2"]),
];

const GENERIC_TOKENIZER_FAMILIES: &[&str] = &["pretrained", "auto"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfigSummary {
    pub model_type: String,
    pub architectures: Vec<String>,
    pub vocab_size: u64,
    pub tokenizer_class_hint: Option<String>,
    pub special_token_names: BTreeSet<String>,
}

impl ModelConfigSummary {
    /// Read the fields of interest from a model `config.json` value.
    pub fn from_json(v: &Value) -> Result<Self, TokenizerError> {
        let model_type = v
            .get("model_type")
            .and_then(Value::as_str)
            .ok_or_else(|| TokenizerError::InvalidConfig("missing string field model_type".into()))?
            .to_string();
        let vocab_size = v
            .get("vocab_size")
            .and_then(Value::as_u64)
            .filter(|&n| n > 0)
            .ok_or_else(|| TokenizerError::InvalidConfig("vocab_size must be a positive integer".into()))?;
        let architectures = v
            .get("architectures")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();
        let tokenizer_class_hint = v.get("tokenizer_class").and_then(Value::as_str).map(str::to_string);
        let special_token_names = ["bos", "eos", "unk", "pad"]
            .into_iter()
            .filter(|n| {
                let present = |k: String| v.get(&k).is_some_and(|x| !x.is_null());
                present(format!("{n}_token_id")) || present(format!("{n}_token"))
            })
            .map(str::to_string)
            .collect();
        Ok(ModelConfigSummary { model_type, architectures, vocab_size, tokenizer_class_hint, special_token_names })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticCode {
    VocabSizeMismatch,
    TokenizerClassMismatch,
    MissingSpecialTokens,
    ArchitectureMismatch,
    UnknownModelType,
    NoTokenizerClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}[{:?}]: {}", self.code, self.message)
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

/// Family named by a tokenizer class: `LlamaTokenizerFast` → `llama`.
pub fn tokenizer_family(class: &str) -> String {
    let mut s = squash(class);
    for suffix in ["fast", "tokenizer"] {
        if let Some(stripped) = s.strip_suffix(suffix) {
            s = stripped.to_string();
        }
    }
    s
}

/// model_type implied by an architecture name: `DeepseekForCausalLM` → `deepseek`.
fn architecture_model_type(arch: &str) -> String {
    let s = squash(arch);
    for suffix in ["forcausallm", "forconditionalgeneration", "forsequenceclassification", "lmheadmodel", "model"] {
        if let Some(stripped) = s.strip_suffix(suffix) {
            return stripped.to_string();
        }
    }
    s
}

fn accepted_families(model_type: &str) -> Option<&'static [&'static str]> {
    let key = squash(model_type);
    MODEL_TYPE_FAMILIES.iter().find(|(t, _)| squash(t) == key).map(|(_, f)| *f)
}

/// Check a model config against the tokenizer that will be loaded with
/// it. Diagnostics come out in a fixed order.
pub fn lint_model_config(config: &ModelConfigSummary, tokenizer: &TokenizerModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let tok_vocab = tokenizer.vocab_size() as u64;
    if config.vocab_size != tok_vocab {
        out.push(Diagnostic {
            severity: Severity::Error,
            code: DiagnosticCode::VocabSizeMismatch,
            message: format!(
                "config vocab_size {} but tokenizer has {} tokens; embedding rows and token ids will not line up",
                config.vocab_size, tok_vocab
            ),
        });
    }

    let families = accepted_families(&config.model_type);
    let mut class_mismatch = false;
    match (&config.tokenizer_class_hint, families) {
        (None, _) => out.push(Diagnostic {
            severity: Severity::Info,
            code: DiagnosticCode::NoTokenizerClass,
            message: "no tokenizer class given; tokenizer family not checked".into(),
        }),
        (Some(_), None) => out.push(Diagnostic {
            severity: Severity::Info,
            code: DiagnosticCode::UnknownModelType,
            message: format!(
                "model_type {:?} is not in the family table; tokenizer family not checked",
                config.model_type
            ),
        }),
        (Some(class), Some(families)) => {
            let fam = tokenizer_family(class);
            if !GENERIC_TOKENIZER_FAMILIES.contains(&fam.as_str()) && !families.contains(&fam.as_str()) {
                class_mismatch = true;
                out.push(Diagnostic {
                    severity: Severity::Error,
                    code: DiagnosticCode::TokenizerClassMismatch,
                    message: format!(
                        "model_type {:?} loads a {} tokenizer, but the tokenizer class is {class} ({fam} family)",
                        config.model_type,
                        families.join("/")
                    ),
                });
            }
        }
    }

    let missing: Vec<&str> = [("bos", tokenizer.bos_id()), ("eos", tokenizer.eos_id())]
        .into_iter()
        .filter(|(_, id)| id.is_none())
        .map(|(n, _)| n)
        .collect();
    if !missing.is_empty() {
        out.push(Diagnostic {
            severity: Severity::Warning,
            code: DiagnosticCode::MissingSpecialTokens,
            message: format!("tokenizer defines no {} token", missing.join("/")),
        });
    }

    if !class_mismatch {
        let declared = squash(&config.model_type);
        let implied: BTreeSet<String> = config.architectures.iter().map(|a| architecture_model_type(a)).collect();
        if !implied.is_empty() && !implied.contains(&declared) {
            out.push(Diagnostic {
                severity: Severity::Info,
                code: DiagnosticCode::ArchitectureMismatch,
                message: format!(
                    "model_type {:?} does not match architectures {:?}; loading may work now but downstream tooling keyed on model_type will misbehave",
                    config.model_type, config.architectures
                ),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::model::SpecialTokens;
    use super::*;

    fn tokenizer(total: usize, specials: SpecialTokens) -> TokenizerModel {
        let fixed = specials.clone();
        let n_fixed = [&fixed.unk, &fixed.bos, &fixed.eos, &fixed.pad].iter().filter(|s| s.is_some()).count();
        let text = (0..total - n_fixed).map(|i| format!("t{i}")).collect();
        TokenizerModel::new(specials, false, text, Vec::new()).unwrap()
    }

    fn config(model_type: &str, arch: &str, vocab: u64, class: &str) -> ModelConfigSummary {
        ModelConfigSummary {
            model_type: model_type.into(),
            architectures: vec![arch.into()],
            vocab_size: vocab,
            tokenizer_class_hint: Some(class.into()),
            special_token_names: BTreeSet::new(),
        }
    }

    #[test]
    fn family_names() {
        assert_eq!(tokenizer_family("LlamaTokenizerFast"), "llama");
        assert_eq!(tokenizer_family("LLaMATokenizer"), "llama");
        assert_eq!(tokenizer_family("DeepseekTokenizerFast"), "deepseek");
        assert_eq!(architecture_model_type("GPT2LMHeadModel"), "gpt2");
        assert_eq!(architecture_model_type("DeepseekForCausalLM"), "deepseek");
    }

    #[test]
    fn consistent_config_is_clean() {
        let tok = tokenizer(1000, SpecialTokens::default());
        let c = config("deepseek", "DeepseekForCausalLM", 1000, "DeepseekTokenizerFast");
        assert!(lint_model_config(&c, &tok).is_empty());
    }

    #[test]
    fn mismatches() {
        let tok = tokenizer(1000, SpecialTokens::default());
        let c = config("llama", "LlamaForCausalLM", 1200, "DeepseekTokenizerFast");
        let codes: Vec<DiagnosticCode> = lint_model_config(&c, &tok).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagnosticCode::VocabSizeMismatch, DiagnosticCode::TokenizerClassMismatch]);
    }

    #[test]
    fn mislabeled_model_type_with_shared_tokenizer() {
        let tok = tokenizer(1000, SpecialTokens::default());
        let c = config("llama", "DeepseekForCausalLM", 1000, "LlamaTokenizerFast");
        let d = lint_model_config(&c, &tok);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::ArchitectureMismatch);
        assert_eq!(d[0].severity, Severity::Info);
    }

    #[test]
    fn missing_specials() {
        let tok = tokenizer(10, SpecialTokens { bos: None, ..SpecialTokens::default() });
        let d = lint_model_config(&config("llama", "LlamaForCausalLM", 10, "LlamaTokenizer"), &tok);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::MissingSpecialTokens);
        assert!(d[0].message.contains("bos"));
    }

    #[test]
    fn parses_config_json() {
        let v: Value = serde_json::json!({
            "model_type": "deepseek",
            "architectures": ["DeepseekForCausalLM"],
            "vocab_size": 102400,
            "bos_token_id": 100000,
            "eos_token_id": 100001,
            "pad_token_id": null
        });
        let c = ModelConfigSummary::from_json(&v).unwrap();
        assert_eq!(c.vocab_size, 102_400);
        assert_eq!(c.special_token_names, ["bos", "eos"].iter().map(|s| s.to_string()).collect());
        assert!(ModelConfigSummary::from_json(&serde_json::json!({"model_type": "x"})).is_err());
    }
}
