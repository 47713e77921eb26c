//! Feature-annotated weighted context-free grammars.
//!
//! A grammar file has four sections, each introduced by its name on a line
//! of its own. Blank lines and `#` comments are ignored.
//!
//! ```text
//! NONTERMINALS
//! # name[@label] [: feature values...]; the first entry is the start symbol
//! S
//! NP : sg pl
//! NPB@NP : sg pl          # symbol NPB, printed as NP in trees
//!
//! LEXICON
//! # word category [feature|-] [lemma]
//! the     D  pos
//! hawk    N  sg  hawk
//! hawks   N  pl  hawk
//!
//! RULES
//! # weight LHS -> RHS...   (weights of one LHS must sum to 1)
//! 1.0 S -> NP[n] VP[n]
//! 1.0 NP[n] -> D[pos] N[n]
//!
//! TEMPLATES
//! # tag : items...; `!` marks a slot whose feature is flipped in the
//! # ungrammatical member, `~a` is the other value of variable `a`
//! simple_agreement : D[pos] N[a] !V[a]
//! ```
//!
//! Inside `[...]` a token that is a declared feature value is a literal;
//! anything else is a variable. Variables on the left-hand side are bound
//! by the parent; unbound right-hand-side variables are drawn uniformly
//! from their domain.

mod pairs;
mod recognize;
mod sample;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use pairs::{generate_pairs, MinimalPair, PairSet};
pub use recognize::Recognizer;
pub use sample::{sample_corpus, SampleOptions};

use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Nt(usize),
    Cat(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    Any,
    Lit(String),
    Var(String),
    NegVar(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub symbol: Symbol,
    pub feature: Feature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub weight: f64,
    pub lhs: usize,
    pub lhs_var: Option<String>,
    pub rhs: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonterminalDef {
    pub name: String,
    pub label: String,
    pub domain: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryDef {
    pub name: String,
    pub domain: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexEntry {
    pub word: String,
    pub category: usize,
    pub feature: Option<String>,
    pub lemma: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateItem {
    pub flip: bool,
    pub category: usize,
    pub feature: Feature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub tag: String,
    pub items: Vec<TemplateItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGrammar {
    pub nonterminals: Vec<NonterminalDef>,
    pub categories: Vec<CategoryDef>,
    pub lexicon: Vec<LexEntry>,
    pub rules: Vec<Rule>,
    pub templates: Vec<Template>,
    rules_by_lhs: Vec<Vec<usize>>,
    words_by_cat: HashMap<(usize, Option<String>), Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Nonterminals,
    Lexicon,
    Rules,
    Templates,
}

impl WeightedGrammar {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut section = Section::None;
        let mut nonterminals: Vec<NonterminalDef> = Vec::new();
        let mut lex_lines: Vec<(usize, Vec<String>)> = Vec::new();
        let mut rule_lines: Vec<(usize, String)> = Vec::new();
        let mut template_lines: Vec<(usize, String)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "NONTERMINALS" => {
                    section = Section::Nonterminals;
                    continue;
                }
                "LEXICON" => {
                    section = Section::Lexicon;
                    continue;
                }
                "RULES" => {
                    section = Section::Rules;
                    continue;
                }
                "TEMPLATES" => {
                    section = Section::Templates;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => return Err(grammar_err(ln, "content before the first section")),
                Section::Nonterminals => {
                    let (head, domain) = match line.split_once(':') {
                        Some((h, d)) => (h.trim(), d.split_whitespace().map(str::to_string).collect::<Vec<_>>()),
                        None => (line, Vec::new()),
                    };
                    let (name, label) = match head.split_once('@') {
                        Some((n, l)) => (n.trim().to_string(), l.trim().to_string()),
                        None => (head.to_string(), head.to_string()),
                    };
                    if name.is_empty() || name.contains(char::is_whitespace) {
                        return Err(grammar_err(ln, "bad nonterminal name"));
                    }
                    if nonterminals.iter().any(|n| n.name == name) {
                        return Err(grammar_err(ln, &format!("duplicate nonterminal {name}")));
                    }
                    nonterminals.push(NonterminalDef { name, label, domain });
                }
                Section::Lexicon => lex_lines.push((ln, line.split_whitespace().map(str::to_string).collect())),
                Section::Rules => rule_lines.push((ln, line.to_string())),
                Section::Templates => template_lines.push((ln, line.to_string())),
            }
        }
        if nonterminals.is_empty() {
            return Err(grammar_err(0, "no nonterminals declared"));
        }

        // lexicon and the category domains it implies
        let mut categories: Vec<CategoryDef> = Vec::new();
        let mut cat_index: HashMap<String, usize> = HashMap::new();
        let mut lexicon = Vec::new();
        let mut cat_has_none: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
        for (ln, cols) in &lex_lines {
            if cols.len() < 2 || cols.len() > 4 {
                return Err(grammar_err(*ln, "lexicon entry: word category [feature] [lemma]"));
            }
            let cat_name = &cols[1];
            if nonterminals.iter().any(|n| &n.name == cat_name) {
                return Err(grammar_err(*ln, &format!("{cat_name} is declared as a nonterminal")));
            }
            let cat = *cat_index.entry(cat_name.clone()).or_insert_with(|| {
                categories.push(CategoryDef {
                    name: cat_name.clone(),
                    domain: Vec::new(),
                });
                categories.len() - 1
            });
            let feature = cols.get(2).filter(|f| f.as_str() != "-").cloned();
            let flags = cat_has_none.entry(cat).or_default();
            if feature.is_some() {
                flags.1 = true;
            } else {
                flags.0 = true;
            }
            if let Some(f) = &feature {
                if !categories[cat].domain.contains(f) {
                    categories[cat].domain.push(f.clone());
                }
            }
            let lemma = cols.get(3).cloned().unwrap_or_else(|| cols[0].clone());
            lexicon.push(LexEntry {
                word: cols[0].clone(),
                category: cat,
                feature,
                lemma,
            });
        }
        for (cat, (none, some)) in cat_has_none {
            if none && some {
                return Err(grammar_err(
                    0,
                    &format!(
                        "category {} mixes featured and featureless entries",
                        categories[cat].name
                    ),
                ));
            }
        }

        let mut g = WeightedGrammar {
            nonterminals,
            categories,
            lexicon,
            rules: Vec::new(),
            templates: Vec::new(),
            rules_by_lhs: Vec::new(),
            words_by_cat: HashMap::new(),
        };
        for (ln, line) in &rule_lines {
            let rule = g.parse_rule(*ln, line)?;
            g.rules.push(rule);
        }
        for (ln, line) in &template_lines {
            let t = g.parse_template(*ln, line)?;
            if g.templates.iter().any(|x| x.tag == t.tag) {
                return Err(grammar_err(*ln, &format!("duplicate template {}", t.tag)));
            }
            g.templates.push(t);
        }
        g.index()?;
        Ok(g)
    }

    fn index(&mut self) -> Result<(), CorpusError> {
        self.rules_by_lhs = vec![Vec::new(); self.nonterminals.len()];
        for (i, r) in self.rules.iter().enumerate() {
            self.rules_by_lhs[r.lhs].push(i);
        }
        for (nt, rules) in self.rules_by_lhs.iter().enumerate() {
            let name = &self.nonterminals[nt].name;
            if rules.is_empty() {
                return Err(grammar_err(0, &format!("nonterminal {name} has no rules")));
            }
            let total: f64 = rules.iter().map(|&r| self.rules[r].weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(grammar_err(0, &format!("weights for {name} sum to {total}, not 1")));
            }
        }
        self.words_by_cat.clear();
        for (i, e) in self.lexicon.iter().enumerate() {
            self.words_by_cat
                .entry((e.category, e.feature.clone()))
                .or_default()
                .push(i);
        }
        Ok(())
    }

    fn lookup_symbol(&self, name: &str) -> Option<Symbol> {
        if let Some(i) = self.nonterminals.iter().position(|n| n.name == name) {
            return Some(Symbol::Nt(i));
        }
        self.categories.iter().position(|c| c.name == name).map(Symbol::Cat)
    }

    pub fn domain(&self, sym: Symbol) -> &[String] {
        match sym {
            Symbol::Nt(i) => &self.nonterminals[i].domain,
            Symbol::Cat(i) => &self.categories[i].domain,
        }
    }

    pub fn symbol_name(&self, sym: Symbol) -> &str {
        match sym {
            Symbol::Nt(i) => &self.nonterminals[i].name,
            Symbol::Cat(i) => &self.categories[i].name,
        }
    }

    fn parse_item(&self, ln: usize, tok: &str) -> Result<Item, CorpusError> {
        let (name, feat) = match tok.split_once('[') {
            Some((n, rest)) => {
                let f = rest
                    .strip_suffix(']')
                    .ok_or_else(|| grammar_err(ln, &format!("unclosed feature in {tok}")))?;
                (n, Some(f))
            }
            None => (tok, None),
        };
        let symbol = self
            .lookup_symbol(name)
            .ok_or_else(|| grammar_err(ln, &format!("unknown symbol {name}")))?;
        let domain = self.domain(symbol);
        let feature = match feat {
            None if domain.is_empty() => Feature::Any,
            None => Feature::Any,
            Some(_) if domain.is_empty() => return Err(grammar_err(ln, &format!("{name} takes no feature"))),
            Some(f) if domain.iter().any(|d| d == f) => Feature::Lit(f.to_string()),
            Some(f) => match f.strip_prefix('~') {
                Some(v) if !v.is_empty() => {
                    if domain.len() != 2 {
                        return Err(grammar_err(ln, &format!("~{v} needs a two-valued domain on {name}")));
                    }
                    Feature::NegVar(v.to_string())
                }
                _ if f.is_empty() => return Err(grammar_err(ln, "empty feature")),
                _ => Feature::Var(f.to_string()),
            },
        };
        Ok(Item { symbol, feature })
    }

    fn parse_rule(&self, ln: usize, line: &str) -> Result<Rule, CorpusError> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 || toks[2] != "->" {
            return Err(grammar_err(ln, "rule: weight LHS -> RHS..."));
        }
        let weight: f64 = toks[0]
            .parse()
            .map_err(|_| grammar_err(ln, &format!("bad weight {}", toks[0])))?;
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(grammar_err(ln, "weight must be in (0, 1]"));
        }
        let lhs_item = self.parse_item(ln, toks[1])?;
        let Symbol::Nt(lhs) = lhs_item.symbol else {
            return Err(grammar_err(ln, "left-hand side must be a nonterminal"));
        };
        let lhs_var = match lhs_item.feature {
            Feature::Any => None,
            Feature::Var(v) => Some(v),
            _ => return Err(grammar_err(ln, "left-hand side feature must be a variable")),
        };
        let rhs = toks[3..]
            .iter()
            .map(|t| self.parse_item(ln, t))
            .collect::<Result<Vec<_>, _>>()?;
        // every variable must range over one domain
        let mut domains: HashMap<&str, &[String]> = HashMap::new();
        if let Some(v) = &lhs_var {
            domains.insert(v, self.domain(Symbol::Nt(lhs)));
        }
        for it in &rhs {
            if let Feature::Var(v) | Feature::NegVar(v) = &it.feature {
                let d = self.domain(it.symbol);
                if let Some(prev) = domains.insert(v, d) {
                    if prev != d {
                        return Err(grammar_err(ln, &format!("variable {v} spans two domains")));
                    }
                }
            }
        }
        Ok(Rule {
            weight,
            lhs,
            lhs_var,
            rhs,
        })
    }

    fn parse_template(&self, ln: usize, line: &str) -> Result<Template, CorpusError> {
        let (tag, body) = line
            .split_once(':')
            .ok_or_else(|| grammar_err(ln, "template: tag : items..."))?;
        let tag = tag.trim().to_string();
        let mut items = Vec::new();
        for tok in body.split_whitespace() {
            let (flip, tok) = match tok.strip_prefix('!') {
                Some(t) => (true, t),
                None => (false, tok),
            };
            let it = self.parse_item(ln, tok)?;
            let Symbol::Cat(category) = it.symbol else {
                return Err(grammar_err(ln, "template items must be lexical categories"));
            };
            if flip && self.categories[category].domain.len() != 2 {
                return Err(grammar_err(
                    ln,
                    "a flipped slot needs a category with a two-valued feature",
                ));
            }
            items.push(TemplateItem {
                flip,
                category,
                feature: it.feature,
            });
        }
        if items.is_empty() || !items.iter().any(|i| i.flip) {
            return Err(grammar_err(ln, "template needs at least one '!' slot"));
        }
        Ok(Template { tag, items })
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn rules_for(&self, nt: usize) -> &[usize] {
        &self.rules_by_lhs[nt]
    }

    /// Lexicon indices for a category with a given feature value.
    pub fn words_for(&self, category: usize, feature: Option<&str>) -> &[usize] {
        self.words_by_cat
            .get(&(category, feature.map(str::to_string)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn template(&self, tag: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.tag == tag)
    }

    pub fn construction_tags(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.tag.as_str()).collect()
    }

    /// Distinct tree labels of phrase-level nonterminals.
    pub fn phrase_labels(&self) -> BTreeSet<&str> {
        self.nonterminals.iter().map(|n| n.label.as_str()).collect()
    }

    /// All words of the lexicon, in file order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.lexicon.iter().map(|e| e.word.as_str())
    }
}

fn grammar_err(line: usize, message: &str) -> CorpusError {
    CorpusError::Grammar {
        line,
        message: message.to_string(),
    }
}

/// The agreement grammar used by the desk-scale experiments.
pub const AGREEMENT_GRAMMAR: &str = include_str!("../../../grammars/agreement.grammar");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grammar_parses() {
        let g = WeightedGrammar::parse(AGREEMENT_GRAMMAR).unwrap();
        assert!(g.templates.len() >= 8);
        assert!(g.template("across_object_rc").is_some());
    }

    #[test]
    fn weights_must_normalise() {
        let text = "NONTERMINALS\nS\nLEXICON\na A\nRULES\n0.5 S -> A\n";
        assert!(matches!(WeightedGrammar::parse(text), Err(CorpusError::Grammar { .. })));
    }

    #[test]
    fn unknown_symbols_are_reported_with_line() {
        let text = "NONTERMINALS\nS\nLEXICON\na A\nRULES\n1.0 S -> B\n";
        assert_eq!(
            WeightedGrammar::parse(text).unwrap_err(),
            CorpusError::Grammar {
                line: 6,
                message: "unknown symbol B".into()
            }
        );
    }

    #[test]
    fn variables_and_literals() {
        let text = "NONTERMINALS\nS\nNP : sg pl\nLEXICON\nthe D\nhawk N sg\nhawks N pl hawk\n\
                    RULES\n1.0 S -> NP[n]\n1.0 NP[x] -> D N[x]\n";
        let g = WeightedGrammar::parse(text).unwrap();
        assert_eq!(g.rules[0].rhs[0].feature, Feature::Var("n".into()));
        assert_eq!(g.rules[1].lhs_var.as_deref(), Some("x"));
        assert_eq!(g.lexicon[2].lemma, "hawk");
        assert_eq!(g.categories[1].domain, vec!["sg", "pl"]);
    }
}
