use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_name, CorpusError, TokenDistribution, NORMALIZATION_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub component: String,
    pub weight: f64,
}

/// A named convex combination of other distributions, e.g. a midtraining mix
/// of 20% code and 80% web text.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub name: String,
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        components: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, CorpusError> {
        let spec = Self {
            name: name.into(),
            components: components
                .into_iter()
                .map(|(component, weight)| MixtureComponent {
                    component: component.into(),
                    weight,
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        check_name(&self.name).map_err(CorpusError::InvalidSpec)?;
        check_weights(self.components.iter().map(|c| c.weight))?;
        let mut seen = BTreeSet::new();
        for c in &self.components {
            if !seen.insert(c.component.as_str()) {
                return Err(CorpusError::InvalidSpec(format!(
                    "mixture `{}` lists `{}` twice",
                    self.name, c.component
                )));
            }
        }
        Ok(())
    }
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<(), CorpusError> {
    let mut n = 0;
    let mut sum = 0.0;
    for w in weights {
        if !(0.0..=1.0).contains(&w) {
            return Err(CorpusError::InvalidSpec(format!("mixture weight {w} outside [0, 1]")));
        }
        sum += w;
        n += 1;
    }
    if n == 0 {
        return Err(CorpusError::EmptyComponents);
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(CorpusError::WeightSumViolation { sum });
    }
    Ok(())
}

/// Materializes `Σ_k w_k · p_k` over the union vocabulary.
///
/// Components with zero weight contribute no vocabulary. Terms are summed in
/// component order.
pub fn mix_distributions(
    name: &str,
    components: &[(&TokenDistribution, f64)],
) -> Result<TokenDistribution, CorpusError> {
    check_weights(components.iter().map(|(_, w)| *w))?;
    let mut probs: BTreeMap<String, f64> = BTreeMap::new();
    for (dist, weight) in components {
        if *weight == 0.0 {
            continue;
        }
        for (token, p) in dist.probs() {
            let term = weight * p;
            probs
                .entry(token.clone())
                .and_modify(|acc| *acc += term)
                .or_insert(term);
        }
    }
    TokenDistribution::from_probs(name, probs)
}

/// Parses a mixes file: `{"mix": [{"component": "c4", "weight": 0.8}, ...], ...}`.
///
/// Mixtures come back sorted by name.
pub fn parse_mixes_json(text: &str) -> Result<Vec<MixtureSpec>, CorpusError> {
    let raw: BTreeMap<String, Vec<MixtureComponent>> =
        serde_json::from_str(text).map_err(|e| CorpusError::InvalidSpec(format!("mixes file: {e}")))?;
    raw.into_iter()
        .map(|(name, components)| {
            let spec = MixtureSpec { name, components };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(name: &str, token: &str) -> TokenDistribution {
        TokenDistribution::from_counts(name, [(token.to_string(), 5)].into_iter().collect()).unwrap()
    }

    fn from_counts(name: &str, pairs: &[(&str, u64)]) -> TokenDistribution {
        TokenDistribution::from_counts(name, pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()).unwrap()
    }

    #[test]
    fn identity_mixture() {
        let a = from_counts("a", &[("x", 3), ("y", 1), ("z", 7)]);
        let m = mix_distributions("m", &[(&a, 1.0)]).unwrap();
        assert_eq!(m.probs(), a.probs());
        assert_eq!(m.name(), "m");
        assert!(m.counts().is_none());
    }

    #[test]
    fn point_masses() {
        let a = point("a", "t1");
        let b = point("b", "t2");
        let m = mix_distributions("m", &[(&a, 0.5), (&b, 0.5)]).unwrap();
        assert_eq!(m.prob("t1"), 0.5);
        assert_eq!(m.prob("t2"), 0.5);
        assert_eq!(m.vocab_size(), 2);
    }

    #[test]
    fn zero_weight_component_adds_no_vocabulary() {
        let a = point("a", "t1");
        let b = point("b", "t2");
        let m = mix_distributions("m", &[(&a, 1.0), (&b, 0.0)]).unwrap();
        assert!(!m.contains("t2"));
    }

    #[test]
    fn weight_errors() {
        let a = point("a", "t1");
        assert!(matches!(mix_distributions("m", &[]), Err(CorpusError::EmptyComponents)));
        assert!(matches!(
            mix_distributions("m", &[(&a, 0.7)]),
            Err(CorpusError::WeightSumViolation { .. })
        ));
        assert!(mix_distributions("m", &[(&a, 1.5), (&a, -0.5)]).is_err());
    }

    #[test]
    fn spec_rejects_duplicates() {
        assert!(MixtureSpec::new("m", [("c4", 0.5), ("c4", 0.5)]).is_err());
        assert!(MixtureSpec::new("m", [("c4", 0.8), ("code", 0.2)]).is_ok());
    }

    #[test]
    fn mixes_file() {
        let text = r#"{"sc_mix": [{"component": "starcoder", "weight": 0.2},
                                  {"component": "c4", "weight": 0.8}],
                       "a_mix": [{"component": "c4", "weight": 1.0}]}"#;
        let mixes = parse_mixes_json(text).unwrap();
        assert_eq!(mixes.len(), 2);
        assert_eq!(mixes[0].name, "a_mix");
        assert_eq!(mixes[1].components[0].component, "starcoder");
        assert!(parse_mixes_json(r#"{"m": [{"component": "c4", "weight": 0.3}]}"#).is_err());
        assert!(parse_mixes_json(r#"{"m": []}"#).is_err());
    }

    fn arb_counts() -> impl Strategy<Value = BTreeMap<String, u64>> {
        proptest::collection::btree_map("[a-h]{1,2}", 1u64..50, 1..12)
    }

    proptest! {
        #[test]
        fn mixture_is_linear_and_normalized(a in arb_counts(), b in arb_counts(), w in 0.01f64..0.99) {
            let da = TokenDistribution::from_counts("a", a).unwrap();
            let db = TokenDistribution::from_counts("b", b).unwrap();
            let m = mix_distributions("m", &[(&da, w), (&db, 1.0 - w)]).unwrap();
            let union: BTreeSet<&String> = da.probs().keys().chain(db.probs().keys()).collect();
            prop_assert_eq!(m.vocab_size(), union.len());
            for t in union {
                let direct = w * da.prob(t) + (1.0 - w) * db.prob(t);
                prop_assert!((m.prob(t) - direct).abs() <= 1e-12);
            }
            let sum: f64 = m.probs().values().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}
