//! Model configuration resolution: command-line flags over file values over defaults.

use std::fs;
use std::path::Path;

use anyhow::Context;
use awblstm::config::{AttentionScope, ModelConfig, OptimizerKind};

use crate::args::{ModelOverrides, OptimizerArg, ScopeArg};
use crate::UsageError;

/// Reads a TOML file of `ModelConfig` keys. Unknown keys are rejected.
pub fn load_file(path: &Path) -> anyhow::Result<ModelConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn apply(mut cfg: ModelConfig, o: &ModelOverrides) -> ModelConfig {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = o.$field { cfg.$field = v; })*
        };
    }
    set!(
        seed,
        epochs,
        batch_size,
        learning_rate,
        word_dim,
        pos_dim,
        dist_dim,
        lower_hidden,
        upper_hidden,
        max_part_len,
        dist_clip,
        min_word_freq,
        validation_split
    );
    if let Some(w) = o.attention_width {
        cfg.attention_width = Some(w);
    }
    if let Some(c) = o.grad_clip {
        cfg.grad_clip = (c > 0.0).then_some(c);
    }
    if let Some(r) = o.negative_keep_ratio {
        cfg.negative_keep_ratio = Some(r);
    }
    if let Some(k) = o.optimizer {
        cfg.optimizer = match k {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        };
    }
    if let Some(s) = o.attention_scope {
        cfg.attention_scope = match s {
            ScopeArg::Sentence => AttentionScope::Sentence,
            ScopeArg::Part => AttentionScope::Part,
        };
    }
    cfg.freeze_embeddings |= o.freeze_embeddings;
    cfg.share_lower_weights |= o.share_lower_weights;
    if o.no_output_gate {
        cfg.output_gate = false;
    }
    cfg
}

pub fn resolve(file: Option<&Path>, o: &ModelOverrides) -> anyhow::Result<ModelConfig> {
    let base = match file {
        Some(p) => load_file(p)?,
        None => ModelConfig::default(),
    };
    let cfg = apply(base, o);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "epochs = 5\nbatch_size = 8\nshare_lower_weights = true\n").unwrap();
        let o = ModelOverrides {
            epochs: Some(9),
            ..Default::default()
        };
        let cfg = resolve(Some(&p), &o).unwrap();
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.batch_size, 8);
        assert!(cfg.share_lower_weights);
        assert_eq!(cfg.word_dim, ModelConfig::default().word_dim);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "epoch = 5\n").unwrap();
        let err = resolve(Some(&p), &ModelOverrides::default()).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn zero_clip_disables_clipping() {
        let o = ModelOverrides {
            grad_clip: Some(0.0),
            no_output_gate: true,
            ..Default::default()
        };
        let cfg = apply(ModelConfig::default(), &o);
        assert_eq!(cfg.grad_clip, None);
        assert!(!cfg.output_gate);
    }
}
