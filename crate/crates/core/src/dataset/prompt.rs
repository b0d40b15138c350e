//! Chat-prompt rendering for training examples.

use crate::error::{ensure, Result};

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant.";
pub const AUDIO_PLACEHOLDER: &str = "<|audio_bos|><|AUDIO|><|audio_eos|>";

/// Renders the chat template with one placeholder line per audio clip.
///
/// ```
/// use acoustic_sim::dataset::render_prompt;
///
/// let text = render_prompt(1, "Does the audio contain a line-of-sight path?", "Yes.").unwrap();
/// assert!(text.starts_with("<|im_start|>system\nYou are a helpful assistant.\n<|im_end|>\n"));
/// assert!(text.ends_with("<|im_start|>assistant\nYes.\n<|im_end|>"));
/// ```
pub fn render_prompt(audio_count: usize, question: &str, answer: &str) -> Result<String> {
    ensure!(
        (1..=2).contains(&audio_count),
        Contract,
        "a prompt takes one or two audio clips, got {audio_count}"
    );
    let mut out = String::new();
    out.push_str("<|im_start|>system\n");
    out.push_str(SYSTEM_PROMPT);
    out.push_str("\n<|im_end|>\n<|im_start|>user\n");
    for i in 1..=audio_count {
        out.push_str(&format!("Audio {i}: {AUDIO_PLACEHOLDER}\n"));
    }
    out.push_str(question);
    out.push_str("\n<|im_end|>\n<|im_start|>assistant\n");
    out.push_str(answer);
    out.push_str("\n<|im_end|>");
    Ok(out)
}
