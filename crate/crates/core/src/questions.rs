//! Natural-language questions for plans, and lexical search over a corpus
//! of generated questions.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::labeling::DomainLabeling;
use crate::plan::{collect_labels, output_returns, PlanArg, PlanGraph, StepId, TypeMap};
use crate::taxonomy::{AttributeType, Category, OperationRegistry};

/// Connective phrases for filters, sorting and limits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterNicenames {
    pub phrases: BTreeMap<String, String>,
}

impl Default for FilterNicenames {
    fn default() -> Self {
        let pairs = [
            ("exact", "of"),
            ("greaterthan", "greater than"),
            ("greaterthan_eq", "greater than or equal to"),
            ("lessthan", "less than"),
            ("lessthan_eq", "less than or equal to"),
            ("contains", "containing"),
            ("not", "not"),
            ("and", "and"),
            ("or", "or"),
            ("asc", "in ascending order"),
            ("desc", "in descending order"),
            ("limit", "limited to the top results"),
        ];
        FilterNicenames { phrases: pairs.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect() }
    }
}

impl FilterNicenames {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.phrases.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuestionError {
    #[error("plan has no return step")]
    NoReturn,
    #[error("step |{0}| is not typed; check the plan first")]
    Unchecked(StepId),
    #[error("operation `{0}` has no language template")]
    MissingTemplate(String),
    #[error("no phrase for `{0}`")]
    MissingNicename(String),
}

struct Renderer<'a> {
    plan: &'a PlanGraph,
    types: &'a TypeMap,
    labeling: &'a DomainLabeling,
    registry: &'a OperationRegistry,
    nicenames: &'a FilterNicenames,
}

/// Sort and limit attached to one return step.
struct Ordering {
    keys: Vec<StepId>,
    descending: bool,
    limited: bool,
}

/// Renders the question a checked plan answers.
pub fn render_question(
    plan: &PlanGraph,
    types: &TypeMap,
    labeling: &DomainLabeling,
    registry: &OperationRegistry,
) -> Result<String, QuestionError> {
    render_question_with(plan, types, labeling, registry, &FilterNicenames::default())
}

pub fn render_question_with(
    plan: &PlanGraph,
    types: &TypeMap,
    labeling: &DomainLabeling,
    registry: &OperationRegistry,
    nicenames: &FilterNicenames,
) -> Result<String, QuestionError> {
    let r = Renderer { plan, types, labeling, registry, nicenames };
    let outputs = output_returns(plan);
    if outputs.is_empty() {
        return Err(QuestionError::NoReturn);
    }
    let clauses = outputs.iter().map(|rid| r.clause(*rid)).collect::<Result<Vec<_>, _>>()?;
    let mut text = clauses.join(" and ");
    if let Some(first) = text.chars().next() {
        let upper: String = first.to_uppercase().collect();
        text.replace_range(..first.len_utf8(), &upper);
    }
    text.push('?');
    Ok(text)
}

impl<'a> Renderer<'a> {
    fn step(&self, id: StepId) -> &'a crate::plan::PlanStep {
        self.plan.step(id).expect("references are validated at parse time")
    }

    fn template(&self, op: &str) -> Result<&'a str, QuestionError> {
        self.registry
            .get(op)
            .map(|s| s.language_template.as_str())
            .filter(|t| !t.is_empty())
            .ok_or_else(|| QuestionError::MissingTemplate(op.to_owned()))
    }

    fn phrase_nice(&self, key: &str) -> Result<&'a str, QuestionError> {
        self.nicenames.get(key).ok_or_else(|| QuestionError::MissingNicename(key.to_owned()))
    }

    fn collect_of(&self, rid: StepId) -> Option<StepId> {
        self.step(rid).args.first().and_then(PlanArg::step_ref)
    }

    fn ordering(&self, rid: StepId) -> Option<Ordering> {
        let mut keys = Vec::new();
        let mut descending = false;
        let mut limited = false;
        let mut sorted = false;
        for r in self.step(rid).refs() {
            let s = self.step(r);
            match s.op.as_str() {
                "sort" => {
                    sorted = true;
                    keys.extend(s.refs());
                    descending = s.args.last().and_then(PlanArg::as_str) == Some("desc");
                }
                "limit" => limited = true,
                _ => {}
            }
        }
        (sorted || limited).then_some(Ordering { keys, descending, limited })
    }

    /// Steps that are grouping keys of aggregates collected by `rid`.
    fn group_keys(&self, rid: StepId) -> Vec<StepId> {
        let mut keys = Vec::new();
        let Some(collect) = self.collect_of(rid) else { return keys };
        for item in self.step(collect).refs() {
            for r in self.step(item).refs() {
                let s = self.step(r);
                if s.op == "groupby" {
                    for k in s.refs() {
                        if !keys.contains(&k) {
                            keys.push(k);
                        }
                    }
                }
            }
        }
        keys
    }

    fn same_value(&self, a: StepId, b: StepId) -> bool {
        if a == b {
            return true;
        }
        match (self.types.get(&a), self.types.get(&b)) {
            (Some(x), Some(y)) => x.attribute_ref.is_some() && x.attribute_ref == y.attribute_ref,
            _ => false,
        }
    }

    fn clause(&self, rid: StepId) -> Result<String, QuestionError> {
        let collect = self.collect_of(rid).ok_or(QuestionError::Unchecked(rid))?;
        let items: Vec<StepId> = self.step(collect).refs().collect();
        let filters = self.filters(rid)?;
        let boolean = items.len() == 1
            && self
                .types
                .get(&items[0])
                .is_some_and(|t| t.types.contains(AttributeType::Filter));
        if boolean && filters.is_empty() {
            return Ok(format!("is the {}", self.value(items[0], &[])?));
        }
        let ordering = self.ordering(rid);
        let keys = self.group_keys(rid);
        let sort_is_key = ordering
            .as_ref()
            .is_some_and(|o| !o.keys.is_empty() && o.keys.iter().all(|k| keys.iter().any(|g| self.same_value(*k, *g))));
        let dropped: Vec<StepId> = match &ordering {
            Some(o) if o.limited => o.keys.clone(),
            _ => Vec::new(),
        };
        let mut body = self.body(rid, &dropped)?;
        let mut prefix = String::new();
        if let Some(o) = &ordering {
            let dir = self.phrase_nice(if o.descending { "desc" } else { "asc" })?;
            let sort_phrase = || -> Result<String, QuestionError> {
                let names = o.keys.iter().map(|k| self.value(*k, &[])).collect::<Result<Vec<_>, _>>()?;
                Ok(names.join(" and "))
            };
            if o.limited {
                let limit = self.phrase_nice("limit")?;
                if o.keys.is_empty() {
                    prefix = format!("for results {limit}, ");
                } else {
                    prefix = format!("for {} sorted {dir} and {limit}, ", sort_phrase()?);
                }
            } else if sort_is_key {
                body.push(' ');
                body.push_str(dir);
            } else if !o.keys.is_empty() {
                body.push_str(&format!(" with {} sorted {dir}", sort_phrase()?));
            }
        }
        let lead = if boolean { "is the" } else { "what is the" };
        Ok(format!("{prefix}{lead} {body}{filters}"))
    }

    /// Collected values of one return, without sort or filter phrases.
    fn body(&self, rid: StepId, dropped_keys: &[StepId]) -> Result<String, QuestionError> {
        let collect = self.collect_of(rid).ok_or(QuestionError::Unchecked(rid))?;
        let keys = self.group_keys(rid);
        let mut parts = Vec::new();
        for item in self.step(collect).refs() {
            let is_plain = self.step(item).op == "retrieve_attribute";
            let omitted = is_plain
                && (keys.iter().any(|k| self.same_value(item, *k))
                    || dropped_keys.iter().any(|k| self.same_value(item, *k)));
            if !omitted {
                parts.push(self.value(item, dropped_keys)?);
            }
        }
        Ok(parts.join(" and "))
    }

    /// " for a and b" from the filters attached to a return, in step order.
    fn filters(&self, rid: StepId) -> Result<String, QuestionError> {
        let mut conjuncts = Vec::new();
        for r in self.step(rid).refs().skip(1) {
            let s = self.step(r);
            if s.op != "sort" && s.op != "limit" {
                self.flatten_and(r, &mut conjuncts);
            }
        }
        conjuncts.sort_unstable();
        if conjuncts.is_empty() {
            return Ok(String::new());
        }
        let parts = conjuncts.iter().map(|c| self.value(*c, &[])).collect::<Result<Vec<_>, _>>()?;
        Ok(format!(" for {}", parts.join(&format!(" {} ", self.phrase_nice("and")?))))
    }

    fn flatten_and(&self, id: StepId, out: &mut Vec<StepId>) {
        let s = self.step(id);
        if s.op == "and" {
            for r in s.refs() {
                self.flatten_and(r, out);
            }
        } else {
            out.push(id);
        }
    }

    fn literal(arg: &PlanArg) -> String {
        match arg {
            PlanArg::StringLit(s) => s.clone(),
            PlanArg::NumberLit(n) => n.to_string(),
            PlanArg::StepRef(r) => format!("|{r}|"),
        }
    }

    fn arg_phrase(&self, arg: &PlanArg, dropped: &[StepId]) -> Result<String, QuestionError> {
        match arg {
            PlanArg::StepRef(r) => self.value(*r, dropped),
            lit => Ok(Self::literal(lit)),
        }
    }

    fn fill(&self, op: &str, phrases: &[String]) -> Result<String, QuestionError> {
        let sig = self.registry.get(op).ok_or_else(|| QuestionError::MissingTemplate(op.to_owned()))?;
        let template = self.template(op)?;
        let positions = template.matches('{').count().max(1);
        if phrases.len() <= positions {
            let refs: Vec<&str> = phrases.iter().map(String::as_str).collect();
            return Ok(sig.fill_template(&refs));
        }
        // More arguments than placeholders: apply the template left to right.
        let mut acc = {
            let refs: Vec<&str> = phrases[..positions].iter().map(String::as_str).collect();
            sig.fill_template(&refs)
        };
        for extra in &phrases[positions..] {
            acc = sig.fill_template(&[&acc, extra]);
        }
        Ok(acc)
    }

    /// Phrase for the value produced by one step.
    fn value(&self, id: StepId, dropped: &[StepId]) -> Result<String, QuestionError> {
        let step = self.step(id);
        let op = step.op.as_str();
        match op {
            "retrieve_attribute" => {
                let source = step.args[0].step_ref().ok_or(QuestionError::Unchecked(id))?;
                let name = step.args[1].as_str().unwrap_or_default();
                let source_step = self.step(source);
                if source_step.op == "return" {
                    return self.pseudo_value(source, name);
                }
                let entity = source_step.args[0].as_str().and_then(|e| self.labeling.entity(e));
                Ok(entity
                    .and_then(|e| e.attribute(name))
                    .map(|a| a.display_name())
                    .unwrap_or_else(|| name.replace('_', " ").to_lowercase()))
            }
            "retrieve_entity" => {
                let name = step.args[0].as_str().unwrap_or_default();
                Ok(self
                    .labeling
                    .entity(name)
                    .filter(|e| !e.nicename.is_empty())
                    .map(|e| e.nicename.clone())
                    .unwrap_or_else(|| name.to_lowercase()))
            }
            "and" | "or" => {
                let parts = step.args.iter().map(|a| self.arg_phrase(a, dropped)).collect::<Result<Vec<_>, _>>()?;
                Ok(parts.join(&format!(" {} ", self.phrase_nice(op)?)))
            }
            "not" => Ok(format!("{} {}", self.phrase_nice("not")?, self.arg_phrase(&step.args[0], dropped)?)),
            "contains" => Ok(format!(
                "{} {} \"{}\"",
                self.arg_phrase(&step.args[0], dropped)?,
                self.phrase_nice("contains")?,
                Self::literal(&step.args[1])
            )),
            "exact" | "greaterthan" | "greaterthan_eq" | "lessthan" | "lessthan_eq" => Ok(format!(
                "{} {} {}",
                self.arg_phrase(&step.args[0], dropped)?,
                self.phrase_nice(op)?,
                self.arg_phrase(&step.args[1], dropped)?
            )),
            _ => {
                let sig = self.registry.get(op).ok_or_else(|| QuestionError::MissingTemplate(op.to_owned()))?;
                let mut phrases = Vec::new();
                let mut grouping = Vec::new();
                for arg in &step.args {
                    match arg {
                        PlanArg::StepRef(r) if self.step(*r).op == "groupby" => {
                            for k in self.step(*r).refs() {
                                if !dropped.iter().any(|d| self.same_value(*d, k)) {
                                    grouping.push(self.value(k, dropped)?);
                                }
                            }
                        }
                        other => phrases.push(self.arg_phrase(other, dropped)?),
                    }
                }
                let mut text = self.fill(op, &phrases)?;
                if sig.category == Category::Aggregation && !grouping.is_empty() {
                    text.push_str(" grouped by ");
                    text.push_str(&grouping.join(" and "));
                }
                Ok(text)
            }
        }
    }

    /// A column collected by an earlier return, described by how that
    /// return computed it.
    fn pseudo_value(&self, rid: StepId, label: &str) -> Result<String, QuestionError> {
        let collect = self.collect_of(rid).ok_or(QuestionError::Unchecked(rid))?;
        let labels = collect_labels(self.plan, collect);
        let item = labels
            .iter()
            .position(|l| l == label)
            .and_then(|i| self.step(collect).refs().nth(i))
            .ok_or(QuestionError::Unchecked(rid))?;
        Ok(format!("{}{}", self.value(item, &[])?, self.filters(rid)?))
    }
}

/// One generated question as stored in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub template_id: String,
    pub question_text: String,
    pub plan_text: String,
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn token_counts(text: &str) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokenize(text) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit<'a> {
    pub record: &'a QuestionRecord,
    pub score: u32,
}

/// Token-overlap index over question texts.
#[derive(Debug, Clone, Default)]
pub struct QuestionIndex {
    records: Vec<QuestionRecord>,
    tokens: Vec<BTreeMap<String, u32>>,
    by_id: BTreeMap<String, usize>,
}

impl QuestionIndex {
    pub fn new(records: Vec<QuestionRecord>) -> QuestionIndex {
        let tokens = records.iter().map(|r| token_counts(&r.question_text)).collect();
        let by_id = records.iter().enumerate().map(|(i, r)| (r.question_id.clone(), i)).collect();
        QuestionIndex { records, tokens, by_id }
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, question_id: &str) -> Option<&QuestionRecord> {
        self.by_id.get(question_id).map(|i| &self.records[*i])
    }

    /// Records sharing at least one token with `query`, best first: higher
    /// overlap, then shorter text, then smaller id.
    pub fn search(&self, query: &str, limit: usize) -> Vec<SearchHit<'_>> {
        self.search_page(query, 0, limit)
    }

    pub fn search_page(&self, query: &str, offset: usize, limit: usize) -> Vec<SearchHit<'_>> {
        let wanted = token_counts(query);
        if wanted.is_empty() {
            return Vec::new();
        }
        let mut hits: Vec<SearchHit<'_>> = self
            .records
            .iter()
            .zip(&self.tokens)
            .filter_map(|(record, have)| {
                let score: u32 = wanted.iter().map(|(t, n)| (*n).min(have.get(t).copied().unwrap_or(0))).sum();
                (score > 0).then_some(SearchHit { record, score })
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then(a.record.question_text.len().cmp(&b.record.question_text.len()))
                .then(a.record.question_id.cmp(&b.record.question_id))
        });
        hits.into_iter().skip(offset).take(limit).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(id: &str, text: &str) -> QuestionRecord {
        QuestionRecord {
            question_id: id.into(),
            template_id: "t".into(),
            question_text: text.into(),
            plan_text: String::new(),
        }
    }

    #[test]
    fn tokens_split_on_punctuation_and_lowercase() {
        assert_eq!(tokenize("Rent, CA? \"handgun\""), ["rent", "ca", "handgun"]);
    }

    #[test]
    fn ranking_by_overlap_then_length_then_id() {
        let index = QuestionIndex::new(vec![
            record("b", "What is the average rent for region name of United States?"),
            record("a", "What is the average rent?"),
            record("c", "What is the count of business?"),
            record("d", "What is the max rent?"),
        ]);
        let hits: Vec<&str> = index.search("average rent", 10).iter().map(|h| h.record.question_id.as_str()).collect();
        assert_eq!(hits, ["a", "b", "d"]);
        assert!(index.search("", 10).is_empty());
        assert_eq!(index.search("RENT", 10), index.search("rent", 10));
        assert_eq!(index.search("rent", 1).len(), 1);
        assert_eq!(index.search_page("rent", 2, 5).len(), 1);
    }
}
