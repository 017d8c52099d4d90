//! Construction of co-authored corpora: partial completions, rewrites and
//! case mixing against a pluggable generator.

mod client;
pub mod mock;

use std::collections::BTreeMap;

use log::warn;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    scalar_slice, segment_units, AuthorSpan, CaseKind, CorpusError, Document, Label,
};
use crate::exec::{derive_seed, map_indexed, with_width, Execution};

pub use client::{backoff_delay, parse_reply, HttpConfig, HttpGenerator, RateLimiter, API_KEY_ENV};
pub use mock::{mock_sources, MarkovStyle, MockGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseMix {
    pub human: f64,
    pub machine_full_or_rewritten: f64,
    pub partial: f64,
}

impl Default for CaseMix {
    fn default() -> Self {
        Self {
            human: 0.10,
            machine_full_or_rewritten: 0.10,
            partial: 0.80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Smallest index (in units) at which a partial split may happen.
    pub min_split_word: usize,
    pub budget_factor_range: [f64; 2],
    pub similarity_threshold: f64,
    /// Total generation attempts per document before giving up.
    pub max_regen_attempts: usize,
    pub case_mix: CaseMix,
    pub temperature: f64,
    pub seed: u64,
    /// Concurrent generator calls.
    pub max_in_flight: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            min_split_word: 30,
            budget_factor_range: [0.8, 2.0],
            similarity_threshold: 0.90,
            max_regen_attempts: 3,
            case_mix: CaseMix::default(),
            temperature: 1.0,
            seed: 1024,
            max_in_flight: 4,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: String| Err(SynthesisError::InvalidConfig(m));
        let [lo, hi] = self.budget_factor_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "budget_factor_range must satisfy 0 < low <= high, got [{lo}, {hi}]"
            ));
        }
        if self.min_split_word < 1 {
            return bad("min_split_word must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return bad("similarity_threshold must lie in [0, 1]".into());
        }
        if self.max_regen_attempts < 1 {
            return bad("max_regen_attempts must be at least 1".into());
        }
        let m = self.case_mix;
        let parts = [m.human, m.machine_full_or_rewritten, m.partial];
        if parts.iter().any(|p| *p < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!(
                "case_mix must be non-negative and sum to 1, got {parts:?}"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub prompt: String,
    pub prefix: String,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub model_id: String,
    /// Sampling seed; honoured by offline generators.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorReply {
    pub completion: String,
    pub finish_reason: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("generator returned an empty completion")]
    EmptyReply,
    #[error("malformed generator reply: {0}")]
    BadReply(String),
}

/// A text generator endpoint.
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorReply, GeneratorError>;
}

/// Adapts a closure into a [`Generator`].
pub struct FnGenerator<F> {
    id: String,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(&GeneratorRequest) -> Result<GeneratorReply, GeneratorError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&GeneratorRequest) -> Result<GeneratorReply, GeneratorError> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorReply, GeneratorError> {
        (self.f)(req)
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("{units} units cannot be split at or after unit {min_split}")]
    NotSplittable { units: usize, min_split: usize },
    #[error("completion still too similar (similarity {similarity:.3}) after {attempts} attempts")]
    TooSimilar { attempts: usize, similarity: f64 },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("no generator configured")]
    NoGenerators,
}

impl SynthesisError {
    pub fn kind(&self) -> &'static str {
        match self {
            SynthesisError::NotSplittable { .. } => "not_splittable",
            SynthesisError::TooSimilar { .. } => "too_similar",
            SynthesisError::Generator(GeneratorError::Unavailable(_)) => "unavailable",
            SynthesisError::Generator(GeneratorError::EmptyReply) => "empty_reply",
            SynthesisError::Generator(GeneratorError::BadReply(_)) => "bad_reply",
            SynthesisError::Corpus(_) => "corpus",
            SynthesisError::InvalidConfig(_) => "invalid_config",
            SynthesisError::NoGenerators => "no_generators",
        }
    }
}

/// A synthesized document plus what it replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub document: Document,
    /// Human text that the completion replaced (the whole original for
    /// rewrites, empty for untouched human documents).
    pub orig_suffix: String,
    pub split_word_index: Option<usize>,
    pub prompt_used: String,
}

impl Sample {
    /// The document with `orig_suffix`, split index and prompt recorded, as
    /// written to corpus files.
    pub fn into_document(self) -> Document {
        let mut d = self.document;
        if d.case_kind != CaseKind::Human {
            d.orig_suffix = Some(self.orig_suffix);
            d.meta.insert("prompt".into(), self.prompt_used);
        }
        if let Some(i) = self.split_word_index {
            d.meta.insert("split_word".into(), i.to_string());
        }
        d
    }
}

/// Uniform split index in `[min_split_word, unit_count - 1]`. Units before the
/// index stay human.
pub fn choose_split_point(
    unit_count: usize,
    min_split_word: usize,
    rng: &mut impl Rng,
) -> Result<usize, SynthesisError> {
    if unit_count <= min_split_word {
        return Err(SynthesisError::NotSplittable {
            units: unit_count,
            min_split: min_split_word,
        });
    }
    Ok(rng.random_range(min_split_word..unit_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Partial,
    Rewrite,
}

/// Prompt templates; `{L}` is replaced by the language name.
pub const PARTIAL_TEMPLATES: [&str; 2] = [
    "continue this text in {L} directly : ",
    "complete this text in {L}, respond directly : ",
];
pub const REWRITE_TEMPLATES: [&str; 4] = [
    "Rewrite this in {L} a different way : ",
    "Generate an alternative version of this in {L} : ",
    "Generate a later update to this in {L} : ",
    "Generate a previous version of this in {L} ; ",
];

/// English name of a language tag, falling back to the tag itself.
pub fn language_name(tag: &str) -> String {
    let primary = tag
        .split(['-', '_'])
        .next()
        .unwrap_or(tag)
        .to_ascii_lowercase();
    let name = match primary.as_str() {
        "ar" => "Arabic",
        "cs" => "Czech",
        "de" => "German",
        "el" => "Greek",
        "en" => "English",
        "es" => "Spanish",
        "fa" => "Persian",
        "fr" => "French",
        "he" => "Hebrew",
        "hi" => "Hindi",
        "id" => "Indonesian",
        "it" => "Italian",
        "ja" => "Japanese",
        "ko" => "Korean",
        "nl" => "Dutch",
        "pl" => "Polish",
        "pt" => "Portuguese",
        "ro" => "Romanian",
        "ru" => "Russian",
        "tr" => "Turkish",
        "uk" => "Ukrainian",
        "vi" => "Vietnamese",
        "zh" => "Chinese",
        _ => return tag.to_string(),
    };
    name.to_string()
}

/// Draws a template uniformly and substitutes `language` (a tag or a name).
pub fn build_prompt(kind: PromptKind, language: &str, rng: &mut impl Rng) -> String {
    let templates: &[&str] = match kind {
        PromptKind::Partial => &PARTIAL_TEMPLATES,
        PromptKind::Rewrite => &REWRITE_TEMPLATES,
    };
    templates
        .choose(rng)
        .expect("non-empty template list")
        .replace("{L}", &language_name(language))
}

/// `ceil(f * replaced)` for `f` uniform in `factor_range`, at least 1.
pub fn token_budget(replaced: usize, factor_range: [f64; 2], rng: &mut impl Rng) -> usize {
    let f = rng.random_range(factor_range[0]..=factor_range[1]);
    ((f * replaced as f64).ceil() as usize).max(1)
}

fn normalise_ws(s: &str) -> Vec<char> {
    let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
    joined.chars().collect()
}

fn grams(chars: &[char]) -> BTreeMap<&[char], usize> {
    let mut m = BTreeMap::new();
    if chars.len() < 3 {
        if !chars.is_empty() {
            m.insert(chars, 1);
        }
        return m;
    }
    for w in chars.windows(3) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Multiset Jaccard overlap of character trigrams after whitespace
/// normalisation (texts under three scalars count as one gram). Exactly 1.0
/// only for equal normalised strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalise_ws(a), normalise_ws(b));
    if a == b {
        return 1.0;
    }
    let (ga, gb) = (grams(&a), grams(&b));
    let mut inter = 0;
    let mut union = 0;
    for (g, &ca) in &ga {
        let cb = gb.get(g).copied().unwrap_or(0);
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    union += gb
        .iter()
        .filter(|(g, _)| !ga.contains_key(*g))
        .map(|(_, c)| c)
        .sum::<usize>();
    if union == 0 {
        return 0.0;
    }
    // permutations can share a trigram multiset; keep 1.0 for equality only
    (inter as f64 / union as f64).min(1.0 - f64::EPSILON)
}

fn generate_distinct(
    client: &dyn Generator,
    base: GeneratorRequest,
    original: &str,
    config: &SynthesisConfig,
    rng: &mut impl Rng,
) -> Result<String, SynthesisError> {
    let mut best = 0.0;
    for _ in 0..config.max_regen_attempts {
        let req = GeneratorRequest {
            seed: rng.random(),
            ..base.clone()
        };
        let reply = client.generate(&req)?;
        let completion = reply.completion.trim();
        if completion.is_empty() {
            return Err(GeneratorError::EmptyReply.into());
        }
        let sim = similarity(completion, original);
        if sim < config.similarity_threshold {
            return Ok(completion.to_string());
        }
        best = sim;
    }
    Err(SynthesisError::TooSimilar {
        attempts: config.max_regen_attempts,
        similarity: best,
    })
}

fn source_text(doc: &Document) -> &str {
    &doc.text
}

/// Replaces the text from a random unit onward with a generated
/// continuation.
pub fn synthesize_partial(
    doc: &Document,
    client: &dyn Generator,
    config: &SynthesisConfig,
    rng: &mut impl Rng,
) -> Result<Sample, SynthesisError> {
    let text = source_text(doc);
    let units = segment_units(text, doc.unit_mode);
    let split = choose_split_point(units.len(), config.min_split_word, rng)?;
    let boundary = units[split].start;
    let n = text.chars().count();
    let prefix = scalar_slice(text, 0, boundary).to_string();
    let orig_suffix = scalar_slice(text, boundary, n).to_string();

    let prompt = build_prompt(PromptKind::Partial, &doc.language, rng);
    let budget = token_budget(units.len() - split, config.budget_factor_range, rng);
    let req = GeneratorRequest {
        prompt: prompt.clone(),
        prefix: prefix.clone(),
        max_new_tokens: budget,
        temperature: config.temperature,
        model_id: client.id().to_string(),
        seed: 0,
    };
    let completion = generate_distinct(client, req, &orig_suffix, config, rng)?;
    let gen_len = completion.chars().count();
    let mut document = Document::new(
        doc.id.clone(),
        doc.language.clone(),
        CaseKind::Partial,
        Some(client.id().to_string()),
        format!("{prefix}{completion}"),
        vec![
            AuthorSpan::new(0, boundary, Label::Human),
            AuthorSpan::new(boundary, boundary + gen_len, Label::Machine),
        ],
    )?;
    document.unit_mode = doc.unit_mode;
    document.meta = doc.meta.clone();
    document.extra = doc.extra.clone();
    Ok(Sample {
        document,
        orig_suffix,
        split_word_index: Some(split),
        prompt_used: prompt,
    })
}

/// Replaces the whole text with a generated rewrite.
pub fn synthesize_rewrite(
    doc: &Document,
    client: &dyn Generator,
    config: &SynthesisConfig,
    rng: &mut impl Rng,
) -> Result<Sample, SynthesisError> {
    let text = source_text(doc);
    let units = segment_units(text, doc.unit_mode).len();
    let prompt = build_prompt(PromptKind::Rewrite, &doc.language, rng);
    let budget = token_budget(units.max(1), config.budget_factor_range, rng);
    let req = GeneratorRequest {
        prompt: prompt.clone(),
        prefix: text.to_string(),
        max_new_tokens: budget,
        temperature: config.temperature,
        model_id: client.id().to_string(),
        seed: 0,
    };
    let completion = generate_distinct(client, req, text, config, rng)?;
    let mut document = Document::single(
        doc.id.clone(),
        doc.language.clone(),
        CaseKind::Rewritten,
        Some(client.id().to_string()),
        completion,
        Label::Machine,
    )?;
    document.unit_mode = doc.unit_mode;
    document.meta = doc.meta.clone();
    document.extra = doc.extra.clone();
    Ok(Sample {
        document,
        orig_suffix: text.to_string(),
        split_word_index: None,
        prompt_used: prompt,
    })
}

fn keep_human(doc: &Document) -> Result<Sample, SynthesisError> {
    let mut document = Document::single(
        doc.id.clone(),
        doc.language.clone(),
        CaseKind::Human,
        None,
        doc.text.clone(),
        Label::Human,
    )?;
    document.unit_mode = doc.unit_mode;
    document.meta = doc.meta.clone();
    document.extra = doc.extra.clone();
    Ok(Sample {
        document,
        orig_suffix: String::new(),
        split_word_index: None,
        prompt_used: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub id: String,
    /// Short error class, see [`SynthesisError::kind`].
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposeOutcome {
    /// Successful samples in input order.
    pub samples: Vec<Sample>,
    pub failures: Vec<Failure>,
    /// Planned case per input document, before any failure.
    pub planned: Vec<CaseKind>,
}

/// Planned case per document: a seeded shuffle assigns the first
/// `round(n * human)` documents to human, the next
/// `round(n * machine_full_or_rewritten)` to rewrites, the rest to partial.
pub fn plan_cases(n: usize, mix: &CaseMix, seed: u64) -> Vec<CaseKind> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_h = ((n as f64) * mix.human).round() as usize;
    let n_m = (((n as f64) * mix.machine_full_or_rewritten).round() as usize).min(n - n_h.min(n));
    let mut plan = vec![CaseKind::Partial; n];
    for (rank, &i) in order.iter().enumerate() {
        plan[i] = if rank < n_h {
            CaseKind::Human
        } else if rank < n_h + n_m {
            CaseKind::Rewritten
        } else {
            CaseKind::Partial
        };
    }
    plan
}

/// Builds a mixed corpus from human documents. Each document gets its own
/// generator stream derived from `(seed, index)`, so the result does not
/// depend on scheduling. Partial candidates too short to split are demoted
/// to rewrites; documents whose synthesis fails are skipped and reported.
pub fn compose_corpus(
    human_docs: &[Document],
    clients: &[Box<dyn Generator>],
    config: &SynthesisConfig,
) -> Result<ComposeOutcome, SynthesisError> {
    config.validate()?;
    let planned = plan_cases(human_docs.len(), &config.case_mix, config.seed);
    if clients.is_empty() && planned.iter().any(|c| *c != CaseKind::Human) {
        return Err(SynthesisError::NoGenerators);
    }
    let results = with_width(config.max_in_flight, || {
        map_indexed(Execution::Parallel, human_docs, |i, doc| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64, 0xC0));
            match planned[i] {
                CaseKind::Human => keep_human(doc),
                kind => {
                    let client = clients[rng.random_range(0..clients.len())].as_ref();
                    if kind == CaseKind::Partial {
                        match synthesize_partial(doc, client, config, &mut rng) {
                            Err(SynthesisError::NotSplittable { .. }) => {
                                synthesize_rewrite(doc, client, config, &mut rng)
                            }
                            other => other,
                        }
                    } else {
                        synthesize_rewrite(doc, client, config, &mut rng)
                    }
                }
            }
        })
    });
    let mut samples = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (doc, r) in human_docs.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                warn!("skipping {}: {e}", doc.id);
                failures.push(Failure {
                    id: doc.id.clone(),
                    kind: e.kind().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(ComposeOutcome {
        samples,
        failures,
        planned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{labels_for_units, word_count};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn source(words: usize, id: &str) -> Document {
        let style = MarkovStyle::new(mock::HUMAN_STYLE_SEED, 0.5);
        Document::single(
            id,
            "en",
            CaseKind::Human,
            None,
            style.generate(words, &mut rng(words as u64)),
            Label::Human,
        )
        .unwrap()
    }

    fn fixed(
        text: &'static str,
    ) -> FnGenerator<
        impl Fn(&GeneratorRequest) -> Result<GeneratorReply, GeneratorError> + Send + Sync,
    > {
        FnGenerator::new("fixed", move |_| {
            Ok(GeneratorReply {
                completion: text.into(),
                finish_reason: "stop".into(),
            })
        })
    }

    #[test]
    fn split_point_bounds() {
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(choose_split_point(31, 30, &mut r).unwrap(), 30);
        }
        assert!(matches!(
            choose_split_point(30, 30, &mut r),
            Err(SynthesisError::NotSplittable { .. })
        ));
    }

    #[test]
    fn split_point_is_uniform() {
        let mut r = rng(2);
        let mut counts = [0usize; 100];
        for _ in 0..10_000 {
            counts[choose_split_point(100, 30, &mut r).unwrap()] += 1;
        }
        assert!(counts[..30].iter().all(|&c| c == 0));
        let observed = &counts[30..];
        assert!(observed.iter().all(|&c| c > 0));
        let expected = 10_000.0 / 70.0;
        let chi2: f64 = observed
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 69 degrees of freedom; 0.999 quantile ~ 111.1
        assert!(chi2 < 111.1, "chi2 = {chi2}");
    }

    #[test]
    fn prompts() {
        let mut r = rng(3);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            let p = build_prompt(PromptKind::Partial, "en", &mut r);
            assert!(
                PARTIAL_TEMPLATES
                    .iter()
                    .any(|t| t.replace("{L}", "English") == p),
                "{p}"
            );
            seen.insert(p);
        }
        assert_eq!(seen.len(), 2);
        assert!(seen.contains("continue this text in English directly : "));
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            seen.insert(build_prompt(PromptKind::Rewrite, "French", &mut r));
        }
        assert_eq!(seen.len(), 4);
        assert!(seen.contains("Generate an alternative version of this in French : "));
        assert_eq!(language_name("fr"), "French");
        assert_eq!(language_name("xx-YY"), "xx-YY");
    }

    #[test]
    fn budgets() {
        let mut r = rng(4);
        for _ in 0..1000 {
            let b = token_budget(10, [0.8, 2.0], &mut r);
            assert!((8..=20).contains(&b));
            assert!(token_budget(1, [0.8, 2.0], &mut r) >= 1);
        }
        let n = 100_000;
        let mean = (0..n)
            .map(|_| token_budget(100, [0.8, 2.0], &mut r) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 140.0).abs() <= 2.0, "{mean}");
    }

    /// Brute-force multiset trigram Jaccard, independent of the BTreeMap path.
    fn oracle_similarity(a: &str, b: &str) -> f64 {
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let (a, b) = (norm(a), norm(b));
        let tri = |s: &str| -> Vec<String> {
            let c: Vec<char> = s.chars().collect();
            (0..c.len().saturating_sub(2))
                .map(|i| c[i..i + 3].iter().collect())
                .collect()
        };
        let (ta, tb) = (tri(&a), tri(&b));
        let mut all: Vec<&String> = ta.iter().chain(&tb).collect();
        all.sort();
        all.dedup();
        let (mut i, mut u) = (0, 0);
        for g in all {
            let ca = ta.iter().filter(|x| *x == g).count();
            let cb = tb.iter().filter(|x| *x == g).count();
            i += ca.min(cb);
            u += ca.max(cb);
        }
        i as f64 / u as f64
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity("same  text", "same text"), 1.0);
        assert_eq!(similarity("abcdef", "uvwxyz"), 0.0);
        let got = similarity("the cat sat", "the cat sat.");
        assert_eq!(got, oracle_similarity("the cat sat", "the cat sat."));
        assert!((got - 0.9).abs() < 1e-15);
        for (a, b) in [
            ("lorem ipsum dolor", "lorem ipsum color"),
            ("aaaa", "aaa"),
            ("one two three", "three two one"),
        ] {
            assert!(
                (similarity(a, b) - oracle_similarity(a, b)).abs() < 1e-15,
                "{a} / {b}"
            );
        }
        assert!(similarity("abab", "baba") < 1.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("ab", ""), 0.0);
    }

    #[test]
    fn partial_construction() {
        let doc = source(60, "p1");
        let g = fixed("Zzz qqq vvv. Www xxx.");
        let s = synthesize_partial(&doc, &g, &SynthesisConfig::default(), &mut rng(5)).unwrap();
        let d = &s.document;
        let spans = d.spans.as_ref().unwrap();
        assert_eq!(spans.len(), 2);
        let split = s.split_word_index.unwrap();
        assert!((30..60).contains(&split));
        let units = segment_units(&doc.text, doc.unit_mode);
        assert_eq!(spans[1].start, units[split].start);
        assert!(d.text.ends_with("Zzz qqq vvv. Www xxx."));
        assert_eq!(
            format!(
                "{}{}",
                scalar_slice(&d.text, 0, spans[1].start),
                s.orig_suffix
            ),
            doc.text
        );
        let labels = labels_for_units(d).unwrap();
        assert_eq!(labels.iter().filter(|l| **l == Label::Human).count(), split);
    }

    #[test]
    fn echo_is_too_similar() {
        let doc = source(60, "p2");
        let calls = AtomicUsize::new(0);
        let text = doc.text.clone();
        let echo = FnGenerator::new("echo", |req: &GeneratorRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            // hand back exactly what was cut off
            let suffix = text[req.prefix.len()..].to_string();
            Ok(GeneratorReply {
                completion: suffix,
                finish_reason: "stop".into(),
            })
        });
        let err =
            synthesize_partial(&doc, &echo, &SynthesisConfig::default(), &mut rng(6)).unwrap_err();
        assert!(
            matches!(err, SynthesisError::TooSimilar { attempts: 3, .. }),
            "{err}"
        );
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let whole = FnGenerator::new("echo", |req: &GeneratorRequest| {
            Ok(GeneratorReply {
                completion: req.prefix.clone(),
                finish_reason: "stop".into(),
            })
        });
        assert!(matches!(
            synthesize_rewrite(&doc, &whole, &SynthesisConfig::default(), &mut rng(6)),
            Err(SynthesisError::TooSimilar { .. })
        ));
    }

    #[test]
    fn rewrite_and_empty_reply() {
        let doc = source(40, "r1");
        let s = synthesize_rewrite(
            &doc,
            &fixed("Brand new words here."),
            &SynthesisConfig::default(),
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(s.document.case_kind, CaseKind::Rewritten);
        assert_eq!(s.document.spans.as_ref().unwrap().len(), 1);
        assert_eq!(s.document.spans.as_ref().unwrap()[0].label, Label::Machine);
        let err = synthesize_rewrite(
            &doc,
            &fixed("   "),
            &SynthesisConfig::default(),
            &mut rng(7),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SynthesisError::Generator(GeneratorError::EmptyReply)
        ));
    }

    #[test]
    fn short_document_not_splittable() {
        let doc = source(20, "s");
        let err = synthesize_partial(
            &doc,
            &fixed("x y z"),
            &SynthesisConfig::default(),
            &mut rng(8),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SynthesisError::NotSplittable {
                units: 20,
                min_split: 30
            }
        ));
    }

    #[test]
    fn all_human_mix_makes_no_calls() {
        let docs: Vec<Document> = (0..20).map(|i| source(40, &format!("d{i}"))).collect();
        let cfg = SynthesisConfig {
            case_mix: CaseMix {
                human: 1.0,
                machine_full_or_rewritten: 0.0,
                partial: 0.0,
            },
            ..SynthesisConfig::default()
        };
        let calls = std::sync::Arc::new(AtomicUsize::new(0));
        let c2 = calls.clone();
        let counting: Box<dyn Generator> =
            Box::new(FnGenerator::new("c", move |_: &GeneratorRequest| {
                c2.fetch_add(1, Ordering::SeqCst);
                Ok(GeneratorReply {
                    completion: "x".into(),
                    finish_reason: String::new(),
                })
            }));
        let out = compose_corpus(&docs, &[counting], &cfg).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert!(out
            .samples
            .iter()
            .all(|s| s.document.case_kind == CaseKind::Human));
        let none: Vec<Box<dyn Generator>> = Vec::new();
        assert!(compose_corpus(&docs, &none, &cfg).is_ok());
    }

    #[test]
    fn compose_is_deterministic_and_mixed() {
        let docs: Vec<Document> = (0..200)
            .map(|i| source(40 + i % 50, &format!("d{i}")))
            .collect();
        let clients: Vec<Box<dyn Generator>> = vec![
            Box::new(MockGenerator::numbered(0)),
            Box::new(MockGenerator::numbered(1)),
        ];
        let cfg = SynthesisConfig::default();
        let a = compose_corpus(&docs, &clients, &cfg).unwrap();
        let b = compose_corpus(&docs, &clients, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.is_empty());
        let count = |k: CaseKind| {
            a.samples
                .iter()
                .filter(|s| s.document.case_kind == k)
                .count()
        };
        assert_eq!(count(CaseKind::Human), 20);
        assert_eq!(count(CaseKind::Rewritten) + count(CaseKind::Partial), 180);
        for s in &a.samples {
            if let Some(i) = s.split_word_index {
                assert!(
                    i >= 30
                        && i < word_count(
                            &docs.iter().find(|d| d.id == s.document.id).unwrap().text
                        )
                );
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SynthesisConfig::default();
        assert!(c.validate().is_ok());
        c.budget_factor_range = [2.0, 1.0];
        assert!(c.validate().is_err());
        let c = SynthesisConfig {
            case_mix: CaseMix {
                human: 0.5,
                machine_full_or_rewritten: 0.5,
                partial: 0.5,
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
