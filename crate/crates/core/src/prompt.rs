//! Canonical grounding prompts for the two task kinds.

use crate::schema::TaskKind;
use crate::{Error, Result};

const BOX_REQUIREMENTS: &str = "Requirements for the output:
- Return only the bounding box coordinates (x0, y0, x1, y1)
- Coordinates must be normalized to the range [0, 1]
- Round each coordinate to three decimal places
- Format the output as strictly (x0, y0, x1, y1) without any additional text.";

/// System prompt for center-point localization. The instruction follows it
/// as the user turn.
pub const POINT_SYSTEM_PROMPT: &str = "You are a GUI agent. Based on the UI screenshot provided, please locate the exact position of the element that matches the instruction given by the user.

Requirements for the output:
- Return only the point (x, y) representing the center of the target element
- Coordinates must be normalized to the range [0, 1]
- Round each coordinate to three decimal places
- Format the output as strictly (x, y) without any additional text";

/// Renders the prompt for `task` with `instruction` substituted.
pub fn render_prompt(task: TaskKind, instruction: &str) -> Result<String> {
    render_prompt_with_description(task, instruction, None)
}

/// Like [`render_prompt`]; box prompts also mention `description` when given.
/// Point prompts ignore it.
pub fn render_prompt_with_description(
    task: TaskKind,
    instruction: &str,
    description: Option<&str>,
) -> Result<String> {
    if instruction.trim().is_empty() {
        return Err(Error::Validation("instruction must not be empty".into()));
    }
    Ok(match task {
        TaskKind::BoxPrediction => {
            let described = match description {
                Some(d) if !d.trim().is_empty() => format!(" and the description \"{d}\""),
                _ => String::new(),
            };
            format!(
                "Output the bounding box in the image of the UI element corresponding to the instruction \"{instruction}\"{described} with grounding.\n\n{BOX_REQUIREMENTS}"
            )
        }
        TaskKind::CenterPointLocalization => {
            format!("{POINT_SYSTEM_PROMPT}\n\nInstruction: {instruction}")
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_prompt() {
        let p = render_prompt(TaskKind::CenterPointLocalization, "open settings").unwrap();
        assert!(p.contains("Return only the point (x, y)"));
        assert!(p.contains("normalized to the range [0, 1]"));
        assert!(p.ends_with("Instruction: open settings"));
    }

    #[test]
    fn box_prompt() {
        let p = render_prompt(TaskKind::BoxPrediction, "Doesn't start checkbox").unwrap();
        assert!(p.contains("(x0, y0, x1, y1)"));
        assert!(p.contains("instruction \"Doesn't start checkbox\" with grounding."));
        assert!(p.contains("Round each coordinate to three decimal places"));
    }

    #[test]
    fn box_prompt_with_description() {
        let p = render_prompt_with_description(
            TaskKind::BoxPrediction,
            "Doesn't start checkbox",
            Some("A square checkbox with the label 'Doesn't start'"),
        )
        .unwrap();
        assert!(p.starts_with(
            "Output the bounding box in the image of the UI element corresponding to the instruction \"Doesn't start checkbox\" and the description \"A square checkbox with the label 'Doesn't start'\" with grounding."
        ));
    }

    #[test]
    fn empty_instruction_rejected() {
        assert!(matches!(
            render_prompt(TaskKind::CenterPointLocalization, ""),
            Err(Error::Validation(_))
        ));
        assert!(render_prompt(TaskKind::BoxPrediction, "   ").is_err());
    }

    #[test]
    fn stable_across_calls() {
        let a = render_prompt(TaskKind::BoxPrediction, "x").unwrap();
        let b = render_prompt(TaskKind::BoxPrediction, "x").unwrap();
        assert_eq!(a, b);
    }
}
