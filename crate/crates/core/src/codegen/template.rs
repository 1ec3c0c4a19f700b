use std::collections::BTreeSet;
use std::path::Path;

use super::TemplateError;

const BUILTIN: &[(&str, &str)] = &[(
    "gsn-java-stub",
    include_str!("../../templates/gsn-java-stub.tmpl"),
)];

/// Middleware-specific wrapper skeleton with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrapperTemplate {
    pub target_id: String,
    pub template_text: String,
    pub required_placeholders: BTreeSet<String>,
}

/// Names of every `{{name}}` occurrence in `text`, in order of appearance.
pub(crate) fn scan_placeholders(text: &str) -> Result<Vec<&str>, TemplateError> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| TemplateError::Syntax("unterminated `{{`".into()))?;
        let name = &after[..end];
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(TemplateError::Syntax(format!("bad placeholder name `{name}`")));
        }
        names.push(name);
        rest = &after[end + 2..];
    }
    Ok(names)
}

impl WrapperTemplate {
    /// Builds a template, checking that every placeholder in the text is declared.
    pub fn new(
        target_id: impl Into<String>,
        template_text: impl Into<String>,
        required_placeholders: BTreeSet<String>,
    ) -> Result<Self, TemplateError> {
        let template_text = template_text.into();
        for name in scan_placeholders(&template_text)? {
            if !required_placeholders.contains(name) {
                return Err(TemplateError::Undeclared(name.to_string()));
            }
        }
        Ok(WrapperTemplate {
            target_id: target_id.into(),
            template_text,
            required_placeholders,
        })
    }

    /// Parses the file form: a `# placeholders: a,b,c` header line, then the text.
    pub fn from_file_text(target_id: &str, file_text: &str) -> Result<Self, TemplateError> {
        let (header, body) = file_text.split_once('\n').unwrap_or((file_text, ""));
        let list = header
            .trim_end_matches('\r')
            .strip_prefix("# placeholders:")
            .ok_or_else(|| TemplateError::Syntax("missing `# placeholders:` header".into()))?;
        let required = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        WrapperTemplate::new(target_id, body, required)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let target_id = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".tmpl"))
            .ok_or_else(|| TemplateError::Syntax(format!("{} is not a .tmpl file", path.display())))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
        WrapperTemplate::from_file_text(target_id, &text)
    }

    /// Templates shipped with the crate.
    pub fn builtin(target_id: &str) -> Option<Self> {
        BUILTIN.iter().find(|(id, _)| *id == target_id).map(|(id, text)| {
            WrapperTemplate::from_file_text(id, text).expect("shipped template is well formed")
        })
    }

    pub fn builtin_targets() -> Vec<&'static str> {
        BUILTIN.iter().map(|(id, _)| *id).collect()
    }
}
