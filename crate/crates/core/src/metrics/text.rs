//! Corpus BLEU-4 and ROUGE-L over whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};

pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    #[default]
    Recall,
    F1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub bleu4: f64,
    pub rouge: f64,
    pub candidates: usize,
    pub references: usize,
    /// Pairs left out of ROUGE because the reference was empty.
    pub rouge_skipped: usize,
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn check_pairs<A, B>(c: &[A], r: &[B]) -> Result<()> {
    if c.is_empty() || c.len() != r.len() {
        return Err(HoiError::Domain(format!(
            "need equal-length non-empty corpora, got {} candidates and {} references",
            c.len(),
            r.len()
        )));
    }
    Ok(())
}

fn ngram_counts<'a, 'b>(toks: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU with clipped n-gram precisions for n = 1..4 and brevity
/// penalty, scaled to 0..100. A zero precision is replaced by
/// `BLEU_EPSILON / total`.
pub fn bleu4<S: AsRef<str>, T: AsRef<str>>(candidates: &[S], references: &[T]) -> Result<f64> {
    check_pairs(candidates, references)?;
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (words(c.as_ref()), words(r.as_ref()));
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(&r, n);
            for (g, k) in ngram_counts(&c, n) {
                matched[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += c.len().saturating_sub(n - 1);
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if matched[n] == 0 {
            BLEU_EPSILON / total[n].max(1) as f64
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

pub fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Mean ROUGE-L over pairs (0..100) and the number of pairs skipped for an
/// empty reference.
pub fn rouge<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[S],
    references: &[T],
    variant: RougeVariant,
) -> Result<(f64, usize)> {
    check_pairs(candidates, references)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (words(c.as_ref()), words(r.as_ref()));
        if r.is_empty() {
            continue;
        }
        let l = lcs_len(&c, &r) as f64;
        let recall = l / r.len() as f64;
        sum += match variant {
            RougeVariant::Recall => recall,
            RougeVariant::F1 => {
                if l == 0.0 {
                    0.0
                } else {
                    let precision = l / c.len() as f64;
                    2.0 * precision * recall / (precision + recall)
                }
            }
        };
        used += 1;
    }
    let skipped = candidates.len() - used;
    if skipped > 0 {
        log::warn!("rouge skipped {skipped} pairs with empty references");
    }
    Ok((if used == 0 { 0.0 } else { 100.0 * sum / used as f64 }, skipped))
}

pub fn text_score<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[S],
    references: &[T],
    variant: RougeVariant,
) -> Result<TextScore> {
    let bleu4 = bleu4(candidates, references)?;
    let (rouge, rouge_skipped) = rouge(candidates, references, variant)?;
    Ok(TextScore {
        bleu4,
        rouge,
        candidates: candidates.len(),
        references: references.len(),
        rouge_skipped,
    })
}
