//! Few-shot topic naming through a chat model.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatModel, ChatRequest};
use crate::error::Result;

/// Marker line that identifies a naming prompt.
pub const NAMING_INSTRUCTION: &str =
    "This line MUST start EXACTLY with `topic: ` (including the space after the colon).";

const PREFIX: &str = "topic:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamingExemplar {
    pub sentences: Vec<String>,
    pub keywords: Vec<String>,
    pub topic: String,
}

pub fn default_naming_exemplars() -> Vec<NamingExemplar> {
    alloc::vec![NamingExemplar {
        sentences: [
            "But if you believe the price will go down, the only way to buy low and sell high is to sell first and buy later.",
            "With your comment, you have stated that your scenario is that you believe that the stock will go up long term, but you also believe that the stock is at a short-term peak and will drop in the near future.",
            "You believe that the stock is a long-term buy, but for some reason you are guessing that the stock will drop in the short-term.",
        ]
        .iter()
        .map(|s| String::from(*s))
        .collect(),
        keywords: ["stock", "the stock price", "stock price", "stock is", "the price", "buy", "sell", "value", "share"]
            .iter()
            .map(|s| String::from(*s))
            .collect(),
        topic: String::from("Short-Term Stock Trading"),
    }]
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map_or_else(|| format!("{n}"), |w| String::from(*w))
}

fn push_sentences(out: &mut String, sentences: &[impl AsRef<str>]) {
    for s in sentences {
        out.push_str("- ");
        out.push_str(s.as_ref().trim());
        out.push('\n');
    }
}

fn join(items: &[impl AsRef<str>]) -> String {
    items.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(", ")
}

pub fn build_naming_prompt(
    exemplars: &[NamingExemplar],
    sentences: &[impl AsRef<str>],
    keywords: &[impl AsRef<str>],
) -> String {
    let mut p = String::from("You will extract a short topic label from given documents and keywords.\n");
    let noun = if exemplars.len() == 1 { "example" } else { "examples" };
    p.push_str(&format!(
        "Here {} {} {noun} of topics you created before:\n\n",
        if exemplars.len() == 1 { "is" } else { "are" },
        count_word(exemplars.len())
    ));
    for (i, ex) in exemplars.iter().enumerate() {
        p.push_str(&format!("Example {}\n", i + 1));
        p.push_str("Sample texts from this topic:\n");
        push_sentences(&mut p, &ex.sentences);
        p.push_str(&format!("Keywords: {}\n", join(&ex.keywords)));
        p.push_str(&format!("Topic: {}\n\n", ex.topic));
    }
    p.push_str("Your Task\n");
    p.push_str("Sample texts from this topic:\n");
    push_sentences(&mut p, sentences);
    p.push_str(&format!("Keywords: {}\n\n", join(keywords)));
    p.push_str("**Crucial Output Instruction:**\n");
    p.push_str("You MUST generate a single line as your response.\n");
    p.push_str(NAMING_INSTRUCTION);
    p.push('\n');
    p.push_str("Following `topic: `, provide ONLY the concise topic label.\n");
    p.push_str(
        "Do NOT add any other text, explanations, numbering, markdown, or any content before or after this single line.\n\n",
    );
    p.push_str("Topic:");
    p
}

/// Text after a leading `topic:` (case-insensitive) on the first non-blank
/// line, trimmed. `None` when the prefix is missing or the label is empty.
pub fn parse_topic_name(completion: &str) -> Option<String> {
    let line = completion.lines().map(str::trim).find(|l| !l.is_empty())?;
    let head = line.get(..PREFIX.len())?;
    if !head.eq_ignore_ascii_case(PREFIX) {
        return None;
    }
    let name = line[PREFIX.len()..].trim();
    (!name.is_empty()).then(|| String::from(name))
}

/// Top-3 keywords joined by `_`.
pub fn fallback_name(keywords: &[impl AsRef<str>]) -> String {
    keywords
        .iter()
        .take(3)
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("_")
}

/// Asks the chat model for a topic name, retrying `retries` times when the
/// completion lacks the prefix, then falling back to [`fallback_name`].
pub fn refine_topic_name(
    chat: &dyn ChatModel,
    exemplars: &[NamingExemplar],
    sentences: &[impl AsRef<str>],
    keywords: &[impl AsRef<str>],
    retries: u32,
    temperature: f64,
) -> Result<String> {
    let prompt = build_naming_prompt(exemplars, sentences, keywords);
    for attempt in 0..=retries {
        let request = ChatRequest::new(prompt.clone(), temperature).with_seed(u64::from(attempt));
        let completion = chat.chat(&request)?;
        if let Some(name) = parse_topic_name(&completion) {
            return Ok(name);
        }
    }
    let name = fallback_name(keywords);
    log::warn!("topic naming failed after {} attempt(s); using {name:?}", retries + 1);
    Ok(name)
}
