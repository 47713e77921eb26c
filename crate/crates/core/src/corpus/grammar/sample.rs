use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Feature, Symbol, WeightedGrammar};
use crate::corpus::{CorpusError, Tree};

/// Give up after this many consecutive depth-cutoff rejections.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    /// Wrap each word in a node labelled with its lexical category.
    pub preterminals: bool,
    /// Derivations deeper than this are rejected and resampled.
    pub max_depth: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            preterminals: false,
            max_depth: 24,
        }
    }
}

/// A sampled tree with the rules used to derive it, in expansion order.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub tree: Tree,
    pub rules: Vec<usize>,
}

struct TooDeep;

impl WeightedGrammar {
    fn pick_value<R: Rng>(&self, sym: Symbol, rng: &mut R) -> Option<String> {
        let d = self.domain(sym);
        if d.is_empty() {
            None
        } else {
            Some(d[rng.gen_range(0..d.len())].clone())
        }
    }

    fn resolve<R: Rng>(
        &self,
        sym: Symbol,
        feature: &Feature,
        env: &mut HashMap<String, String>,
        rng: &mut R,
    ) -> Option<String> {
        match feature {
            Feature::Any => self.pick_value(sym, rng),
            Feature::Lit(v) => Some(v.clone()),
            Feature::Var(v) => {
                if let Some(val) = env.get(v) {
                    return Some(val.clone());
                }
                let val = self.pick_value(sym, rng)?;
                env.insert(v.clone(), val.clone());
                Some(val)
            }
            Feature::NegVar(v) => {
                let val = match env.get(v) {
                    Some(val) => val.clone(),
                    None => {
                        let val = self.pick_value(sym, rng)?;
                        env.insert(v.clone(), val.clone());
                        val
                    }
                };
                self.domain(sym).iter().find(|d| **d != val).cloned()
            }
        }
    }

    fn expand<R: Rng>(
        &self,
        nt: usize,
        value: Option<String>,
        depth: usize,
        opts: &SampleOptions,
        rng: &mut R,
        used: &mut Vec<usize>,
    ) -> Result<Tree, TooDeep> {
        if depth > opts.max_depth {
            return Err(TooDeep);
        }
        let candidates = self.rules_for(nt);
        let mut u: f64 = rng.gen::<f64>();
        let mut chosen = *candidates.last().unwrap();
        for &r in candidates {
            u -= self.rules[r].weight;
            if u < 0.0 {
                chosen = r;
                break;
            }
        }
        used.push(chosen);
        let rule = &self.rules[chosen];
        let mut env: HashMap<String, String> = HashMap::new();
        if let (Some(var), Some(val)) = (&rule.lhs_var, value) {
            env.insert(var.clone(), val);
        }
        let mut children = Vec::with_capacity(rule.rhs.len());
        for item in &rule.rhs {
            let val = self.resolve(item.symbol, &item.feature, &mut env, rng);
            match item.symbol {
                Symbol::Nt(child) => children.push(self.expand(child, val, depth + 1, opts, rng, used)?),
                Symbol::Cat(cat) => {
                    let words = self.words_for(cat, val.as_deref());
                    assert!(
                        !words.is_empty(),
                        "no words for category {} with feature {:?}",
                        self.categories[cat].name,
                        val
                    );
                    let entry = &self.lexicon[words[rng.gen_range(0..words.len())]];
                    let leaf = Tree::leaf(entry.word.clone());
                    children.push(if opts.preterminals {
                        Tree::node(self.categories[cat].name.clone(), vec![leaf])
                    } else {
                        leaf
                    });
                }
            }
        }
        Ok(Tree::node(self.nonterminals[nt].label.clone(), children))
    }

    /// One derivation from the start symbol, resampling on depth cutoff.
    pub fn sample_derivation<R: Rng>(&self, rng: &mut R, opts: &SampleOptions) -> Result<Derivation, CorpusError> {
        for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
            let mut used = Vec::new();
            let start_value = self.pick_value(Symbol::Nt(self.start()), rng);
            match self.expand(self.start(), start_value, 1, opts, rng, &mut used) {
                Ok(tree) => return Ok(Derivation { tree, rules: used }),
                Err(TooDeep) => continue,
            }
        }
        Err(CorpusError::NonTerminating(MAX_CONSECUTIVE_REJECTIONS))
    }

    /// Checks that every (category, feature) combination used by a rule has words.
    pub fn check_lexical_coverage(&self) -> Result<(), CorpusError> {
        for rule in &self.rules {
            for item in &rule.rhs {
                if let Symbol::Cat(cat) = item.symbol {
                    let dom = &self.categories[cat].domain;
                    let values: Vec<Option<&str>> = match &item.feature {
                        Feature::Lit(v) => vec![Some(v.as_str())],
                        _ if dom.is_empty() => vec![None],
                        _ => dom.iter().map(|d| Some(d.as_str())).collect(),
                    };
                    for v in values {
                        if self.words_for(cat, v).is_empty() {
                            return Err(CorpusError::Grammar {
                                line: 0,
                                message: format!(
                                    "no lexicon entry for {}[{}]",
                                    self.categories[cat].name,
                                    v.unwrap_or("-")
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `n` i.i.d. trees from the grammar; identical output for identical seeds.
pub fn sample_corpus(
    grammar: &WeightedGrammar,
    seed: u64,
    n: usize,
    opts: &SampleOptions,
) -> Result<Vec<Tree>, CorpusError> {
    grammar.check_lexical_coverage()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| grammar.sample_derivation(&mut rng, opts).map(|d| d.tree))
        .collect()
}
