use serde::{Deserialize, Serialize};

use super::icl::{anonymized_indices, flatten};
use super::transport::Transport;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::split::draw_without_replacement;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub iterations: usize,
    pub captions_per_iteration: usize,
    pub patterns_per_dataset: usize,
    pub bullets: usize,
    pub seed: u64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            iterations: 10,
            captions_per_iteration: 120,
            patterns_per_dataset: 2,
            bullets: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternRound {
    pub prompt: String,
    pub response: String,
    /// Per dataset (in dataset order), the patterns parsed from the reply.
    pub patterns: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// `shown[d]` is the 1-based index dataset `d` was presented under.
    pub shown: Vec<usize>,
    pub rounds: Vec<PatternRound>,
    pub condense_prompt: String,
    pub condense_response: String,
    /// Per dataset, the final bullets.
    pub bullets: Vec<Vec<String>>,
}

/// Splits a reply into `Distribution i` sections of bullet lines. Headers may
/// carry markdown emphasis; bullets start with `-`, `*` or `N.`.
pub fn parse_sections(text: &str, k: usize) -> Vec<Vec<String>> {
    let mut sections = vec![Vec::new(); k];
    let mut current: Option<usize> = None;
    for raw in text.lines() {
        let line = raw.trim();
        let plain = line.trim_matches(|c| c == '*' || c == '#' || c == ' ' || c == ':');
        if let Some(rest) = plain.to_ascii_lowercase().strip_prefix("distribution ") {
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            if let Ok(i) = digits.parse::<usize>() {
                current = (1..=k).contains(&i).then_some(i - 1);
                continue;
            }
        }
        let Some(sec) = current else { continue };
        let bullet = line
            .strip_prefix("- ")
            .or_else(|| line.strip_prefix("* "))
            .or_else(|| {
                let n = line.chars().take_while(char::is_ascii_digit).count();
                (n > 0).then(|| line[n..].strip_prefix(". ")).flatten()
            });
        if let Some(b) = bullet {
            let b = b.trim();
            if !b.is_empty() {
                sections[sec].push(b.to_owned());
            }
        }
    }
    sections
}

fn take_exact(sections: Vec<Vec<String>>, want: usize, what: &str) -> Result<Vec<Vec<String>>> {
    sections
        .into_iter()
        .enumerate()
        .map(|(i, mut s)| {
            if s.len() < want {
                return Err(Error::Format(format!(
                    "expected {want} {what} for distribution {}, found {}",
                    i + 1,
                    s.len()
                )));
            }
            s.truncate(want);
            Ok(s)
        })
        .collect()
}

fn ordered(shown: &[usize]) -> Vec<usize> {
    let mut by_index: Vec<usize> = (0..shown.len()).collect();
    by_index.sort_by_key(|&d| shown[d]);
    by_index
}

pub fn pattern_prompt(samples: &[Vec<String>], shown: &[usize], patterns: usize) -> String {
    let k = samples.len();
    let mut text = format!("Below are image captions sampled from {k} different distributions.\n");
    for d in ordered(shown) {
        text.push_str(&format!("\nDistribution {}:\n", shown[d]));
        for c in &samples[d] {
            text.push_str("- ");
            text.push_str(&flatten(c));
            text.push('\n');
        }
    }
    text.push_str(&format!(
        "\nIdentify {patterns} distinctive patterns for each distribution. For each distribution \
         write a line \"Distribution i:\" followed by exactly {patterns} lines starting with \"- \"."
    ));
    text
}

pub fn condense_prompt(patterns: &[Vec<String>], shown: &[usize], bullets: usize) -> String {
    let k = patterns.len();
    let mut text = format!("Below are patterns observed in captions from {k} different distributions.\n");
    for d in ordered(shown) {
        text.push_str(&format!("\nDistribution {}:\n", shown[d]));
        for p in &patterns[d] {
            text.push_str("- ");
            text.push_str(&flatten(p));
            text.push('\n');
        }
    }
    text.push_str(&format!(
        "\nCondense the patterns of each distribution into exactly {bullets} bullet points. For each \
         distribution write a line \"Distribution i:\" followed by exactly {bullets} lines starting with \"- \"."
    ));
    text
}

/// Two-step summarization. Each round samples captions from every dataset
/// and asks for distinctive patterns; the accumulated patterns are then
/// condensed into a fixed number of bullets per dataset. The
/// dataset-to-index assignment is fixed for the whole run.
pub fn summarize_datasets(
    captions: &[Vec<String>],
    transport: &dyn Transport,
    cfg: &SummaryConfig,
) -> Result<DatasetSummary> {
    let k = captions.len();
    if k == 0 || cfg.iterations == 0 || cfg.patterns_per_dataset == 0 || cfg.bullets == 0 {
        return Err(Error::InvalidConfig("summary needs datasets, iterations, patterns and bullets".into()));
    }
    for (d, set) in captions.iter().enumerate() {
        if set.len() < cfg.captions_per_iteration {
            return Err(Error::InsufficientCaptions {
                dataset: d,
                needed: cfg.captions_per_iteration,
                available: set.len(),
            });
        }
    }
    let shown = anonymized_indices(k, cfg.seed);
    let mut rounds = Vec::with_capacity(cfg.iterations);
    let mut accumulated = vec![Vec::new(); k];
    for it in 0..cfg.iterations {
        let samples: Vec<Vec<String>> = captions
            .iter()
            .enumerate()
            .map(|(d, set)| {
                let mut rng = Rng::keyed(cfg.seed, format!("summary:{it}:{d}").as_bytes());
                draw_without_replacement(set.len(), cfg.captions_per_iteration, &mut rng)
                    .into_iter()
                    .map(|i| set[i].clone())
                    .collect()
            })
            .collect();
        let prompt = pattern_prompt(&samples, &shown, cfg.patterns_per_dataset);
        let response = transport.send(&prompt)?;
        let by_index = take_exact(parse_sections(&response, k), cfg.patterns_per_dataset, "patterns")?;
        let patterns: Vec<Vec<String>> = (0..k).map(|d| by_index[shown[d] - 1].clone()).collect();
        for (acc, p) in accumulated.iter_mut().zip(&patterns) {
            acc.extend(p.iter().cloned());
        }
        rounds.push(PatternRound {
            prompt,
            response,
            patterns,
        });
    }
    let condense = condense_prompt(&accumulated, &shown, cfg.bullets);
    let condense_response = transport.send(&condense)?;
    let by_index = take_exact(parse_sections(&condense_response, k), cfg.bullets, "bullets")?;
    let bullets = (0..k).map(|d| by_index[shown[d] - 1].clone()).collect();
    Ok(DatasetSummary {
        shown,
        rounds,
        condense_prompt: condense,
        condense_response,
        bullets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockTransport;

    fn sets(k: usize, n: usize) -> Vec<Vec<String>> {
        (0..k).map(|d| (0..n).map(|i| format!("set{d} cap {i}")).collect()).collect()
    }

    fn reply(k: usize, per: usize, word: &str) -> String {
        (1..=k)
            .map(|i| {
                let lines: Vec<String> = (0..per).map(|j| format!("- {word} {i}.{j}")).collect();
                format!("**Distribution {i}:**\n{}", lines.join("\n"))
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn pattern_lines(prompt: &str, index: usize) -> usize {
        let section = prompt.split(&format!("Distribution {index}:\n")).nth(1).unwrap();
        section.lines().take_while(|l| l.starts_with("- ")).count()
    }

    #[test]
    fn defaults_forward_twenty_patterns_each() {
        let mock = MockTransport::from_fn(|_, p| {
            if p.starts_with("Below are patterns") { reply(3, 5, "bullet") } else { reply(3, 2, "pattern") }
        });
        let s = summarize_datasets(&sets(3, 150), &mock, &SummaryConfig::default()).unwrap();
        assert_eq!(s.rounds.len(), 10);
        for i in 1..=3 {
            assert_eq!(pattern_lines(&s.rounds[0].prompt, i), 120);
            assert_eq!(pattern_lines(&s.condense_prompt, i), 20);
        }
        assert!(s.bullets.iter().all(|b| b.len() == 5));
        // Bullets come back verbatim, mapped to the dataset they describe.
        for d in 0..3 {
            assert_eq!(s.bullets[d][0], format!("bullet {}.0", s.shown[d]));
        }
    }

    #[test]
    fn single_iteration_forwards_two() {
        let cfg = SummaryConfig {
            iterations: 1,
            captions_per_iteration: 4,
            ..Default::default()
        };
        let mock = MockTransport::from_fn(|i, _| if i == 0 { reply(2, 2, "p") } else { reply(2, 5, "b") });
        let s = summarize_datasets(&sets(2, 4), &mock, &cfg).unwrap();
        for i in 1..=2 {
            assert_eq!(pattern_lines(&s.condense_prompt, i), 2);
        }
    }

    #[test]
    fn undelimited_reply_is_format_error() {
        let cfg = SummaryConfig {
            iterations: 1,
            captions_per_iteration: 2,
            ..Default::default()
        };
        let mock = MockTransport::scripted(["no structure here"]);
        assert!(matches!(summarize_datasets(&sets(2, 3), &mock, &cfg), Err(Error::Format(_))));
        assert!(matches!(
            summarize_datasets(&sets(2, 1), &mock, &cfg),
            Err(Error::InsufficientCaptions { .. })
        ));
    }

    #[test]
    fn numbered_bullets_parse() {
        let s = parse_sections("Distribution 2:\n1. alpha\n2. beta\nDistribution 1\n* gamma", 2);
        assert_eq!(s, vec![vec!["gamma".to_string()], vec!["alpha".into(), "beta".into()]]);
    }
}
