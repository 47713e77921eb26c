use std::collections::{HashMap, HashSet};

use super::{Feature, Symbol, WeightedGrammar};

/// Chart recogniser over the feature-expanded (ground) grammar.
///
/// Every rule is instantiated for each assignment of its feature variables,
/// giving a plain CFG whose nonterminals are `NAME[value]` strings; words are
/// matched through the lexicon. Recognition is Earley-style, so no
/// binarisation is needed.
pub struct Recognizer {
    /// Ground rules as (lhs, rhs) over interned symbols.
    rules: Vec<(usize, Vec<usize>)>,
    rules_by_lhs: HashMap<usize, Vec<usize>>,
    start: usize,
    is_terminal: Vec<bool>,
    /// word → ground preterminal symbols it can realise
    lexicon: HashMap<String, Vec<usize>>,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, usize>,
    terminal: Vec<bool>,
}

impl Interner {
    fn get(&mut self, name: String, terminal: bool) -> usize {
        if let Some(&i) = self.ids.get(&name) {
            return i;
        }
        let i = self.terminal.len();
        self.ids.insert(name, i);
        self.terminal.push(terminal);
        i
    }
}

fn ground_name(g: &WeightedGrammar, sym: Symbol, value: Option<&str>) -> String {
    match value {
        Some(v) => format!("{}[{}]", g.symbol_name(sym), v),
        None => g.symbol_name(sym).to_string(),
    }
}

impl Recognizer {
    pub fn new(g: &WeightedGrammar) -> Self {
        let mut names = Interner::default();
        let mut rules = Vec::new();
        for rule in &g.rules {
            // variables in order of first appearance, with their domains
            let mut vars: Vec<(String, Vec<String>)> = Vec::new();
            let mut add_var = |v: &str, dom: &[String]| {
                if !vars.iter().any(|(n, _)| n == v) {
                    vars.push((v.to_string(), dom.to_vec()));
                }
            };
            if let Some(v) = &rule.lhs_var {
                add_var(v, g.domain(Symbol::Nt(rule.lhs)));
            }
            let mut anon = Vec::new();
            for (k, item) in rule.rhs.iter().enumerate() {
                match &item.feature {
                    Feature::Var(v) | Feature::NegVar(v) => add_var(v, g.domain(item.symbol)),
                    Feature::Any if !g.domain(item.symbol).is_empty() => {
                        let name = format!("#anon{k}");
                        add_var(&name, g.domain(item.symbol));
                        anon.push((k, name));
                    }
                    _ => {}
                }
            }
            let lhs_any = rule.lhs_var.is_none() && !g.domain(Symbol::Nt(rule.lhs)).is_empty();
            if lhs_any {
                add_var("#lhs", g.domain(Symbol::Nt(rule.lhs)));
            }
            let sizes: Vec<usize> = vars.iter().map(|(_, d)| d.len()).collect();
            let mut odometer = vec![0usize; vars.len()];
            loop {
                let env: HashMap<&str, &str> = vars
                    .iter()
                    .zip(&odometer)
                    .map(|((n, d), &i)| (n.as_str(), d[i].as_str()))
                    .collect();
                let lhs_val = rule
                    .lhs_var
                    .as_deref()
                    .or(if lhs_any { Some("#lhs") } else { None })
                    .map(|v| env[v]);
                let lhs = names.get(ground_name(g, Symbol::Nt(rule.lhs), lhs_val), false);
                let rhs = rule
                    .rhs
                    .iter()
                    .enumerate()
                    .map(|(k, item)| {
                        let val: Option<String> = match &item.feature {
                            Feature::Lit(v) => Some(v.clone()),
                            Feature::Var(v) => Some(env[v.as_str()].to_string()),
                            Feature::NegVar(v) => g
                                .domain(item.symbol)
                                .iter()
                                .find(|d| d.as_str() != env[v.as_str()])
                                .cloned(),
                            Feature::Any => anon
                                .iter()
                                .find(|(i, _)| *i == k)
                                .map(|(_, n)| env[n.as_str()].to_string()),
                        };
                        let terminal = matches!(item.symbol, Symbol::Cat(_));
                        names.get(ground_name(g, item.symbol, val.as_deref()), terminal)
                    })
                    .collect();
                rules.push((lhs, rhs));

                // advance the odometer
                let mut pos = 0;
                loop {
                    if pos == odometer.len() {
                        break;
                    }
                    odometer[pos] += 1;
                    if odometer[pos] < sizes[pos] {
                        break;
                    }
                    odometer[pos] = 0;
                    pos += 1;
                }
                if pos == odometer.len() {
                    break;
                }
            }
        }
        let mut lexicon: HashMap<String, Vec<usize>> = HashMap::new();
        for e in &g.lexicon {
            let sym = names.get(ground_name(g, Symbol::Cat(e.category), e.feature.as_deref()), true);
            lexicon.entry(e.word.clone()).or_default().push(sym);
        }
        let start_sym = Symbol::Nt(g.start());
        let start_names: Vec<String> = if g.domain(start_sym).is_empty() {
            vec![ground_name(g, start_sym, None)]
        } else {
            g.domain(start_sym)
                .iter()
                .map(|v| ground_name(g, start_sym, Some(v)))
                .collect()
        };
        // a synthetic super-start covers featured start symbols
        let start = names.get("#START".into(), false);
        for s in start_names {
            let s = names.get(s, false);
            rules.push((start, vec![s]));
        }
        let mut rules_by_lhs: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, (lhs, _)) in rules.iter().enumerate() {
            rules_by_lhs.entry(*lhs).or_default().push(i);
        }
        Self {
            rules,
            rules_by_lhs,
            start,
            is_terminal: names.terminal,
            lexicon,
        }
    }

    /// True iff the grammar derives exactly this word sequence.
    pub fn accepts<S: AsRef<str>>(&self, words: &[S]) -> bool {
        let n = words.len();
        let mut tags: Vec<&[usize]> = Vec::with_capacity(n);
        for w in words {
            match self.lexicon.get(w.as_ref()) {
                Some(t) => tags.push(t),
                None => return false,
            }
        }
        type State = (usize, usize, usize); // rule, dot, origin
        let mut chart: Vec<Vec<State>> = vec![Vec::new(); n + 1];
        let mut seen: Vec<HashSet<State>> = vec![HashSet::new(); n + 1];
        let mut add = |chart: &mut Vec<Vec<State>>, i: usize, s: State| {
            if seen[i].insert(s) {
                chart[i].push(s);
            }
        };
        for &r in &self.rules_by_lhs[&self.start] {
            add(&mut chart, 0, (r, 0, 0));
        }
        for i in 0..=n {
            let mut k = 0;
            while k < chart[i].len() {
                let (r, dot, origin) = chart[i][k];
                k += 1;
                let rhs = &self.rules[r].1;
                if dot < rhs.len() {
                    let sym = rhs[dot];
                    if self.is_terminal[sym] {
                        if i < n && tags[i].contains(&sym) {
                            add(&mut chart, i + 1, (r, dot + 1, origin));
                        }
                    } else if let Some(rs) = self.rules_by_lhs.get(&sym) {
                        for &r2 in rs {
                            add(&mut chart, i, (r2, 0, i));
                        }
                    }
                } else {
                    let lhs = self.rules[r].0;
                    let parents: Vec<State> = chart[origin]
                        .iter()
                        .copied()
                        .filter(|&(pr, pd, _)| self.rules[pr].1.get(pd) == Some(&lhs))
                        .collect();
                    for (pr, pd, po) in parents {
                        add(&mut chart, i, (pr, pd + 1, po));
                    }
                }
            }
        }
        chart[n]
            .iter()
            .any(|&(r, dot, origin)| origin == 0 && self.rules[r].0 == self.start && dot == self.rules[r].1.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::grammar::{sample_corpus, SampleOptions, AGREEMENT_GRAMMAR};

    #[test]
    fn accepts_samples_and_rejects_agreement_errors() {
        let g = WeightedGrammar::parse(AGREEMENT_GRAMMAR).unwrap();
        let rec = Recognizer::new(&g);
        let trees = sample_corpus(&g, 3, 200, &SampleOptions::default()).unwrap();
        for t in &trees {
            assert!(rec.accepts(&t.leaves()), "{t}");
        }
        assert!(rec.accepts(&["the", "farmer", "swims"]));
        assert!(!rec.accepts(&["the", "farmer", "swim"]));
        assert!(!rec.accepts(&["the", "farmer"]));
        assert!(!rec.accepts(&["unknownword"]));
        let empty: [&str; 0] = [];
        assert!(!rec.accepts(&empty));
    }
}
