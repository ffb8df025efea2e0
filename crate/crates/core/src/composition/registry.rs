use std::collections::BTreeMap;

use super::models::{Additive, AggregatedSememe, ConcatTanh, Multiplicative, MutualAttention};
use super::ops::MatrixSource;
use super::{Composer, CompositionError, RuleMode};

/// Structural options handed to every factory; each model reads the ones
/// it cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComposerOptions {
    pub rule_mode: RuleMode,
    pub h_r: usize,
    pub shared_attention: bool,
}

impl Default for ComposerOptions {
    fn default() -> Self {
        Self {
            rule_mode: RuleMode::LowRank,
            h_r: 5,
            shared_attention: true,
        }
    }
}

pub type ComposerFactory = fn(&ComposerOptions) -> Box<dyn Composer>;

#[derive(Debug, Clone, Default)]
pub struct ComposerRegistry {
    factories: BTreeMap<String, ComposerFactory>,
}

impl ComposerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with every built-in model.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register("add", |_| Box::new(Additive));
        r.register("mul", |_| Box::new(Multiplicative));
        r.register("scas_s", |_| Box::new(ConcatTanh));
        r.register("scas", |o| {
            Box::new(AggregatedSememe {
                matrix: MatrixSource::Shared,
                h_r: o.h_r,
            })
        });
        r.register("scmsa", |o| {
            Box::new(MutualAttention {
                matrix: MatrixSource::Shared,
                h_r: o.h_r,
                shared_attention: o.shared_attention,
            })
        });
        r.register("scas_r", |o| {
            Box::new(AggregatedSememe {
                matrix: MatrixSource::PerRule(o.rule_mode),
                h_r: o.h_r,
            })
        });
        r.register("scmsa_r", |o| {
            Box::new(MutualAttention {
                matrix: MatrixSource::PerRule(o.rule_mode),
                h_r: o.h_r,
                shared_attention: o.shared_attention,
            })
        });
        r
    }

    /// Adds or replaces a model constructor.
    pub fn register(&mut self, name: &str, factory: ComposerFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn build(&self, name: &str, options: &ComposerOptions) -> Result<Box<dyn Composer>, CompositionError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| CompositionError::UnknownModel(name.to_owned()))?;
        Ok(factory(options))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
