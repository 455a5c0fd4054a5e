use alloc::string::String;

/// Single-pass `{name}` substitution.
///
/// Only names listed in `fields` are placeholders; any other brace text is
/// copied through. Substituted values are never rescanned, so a value that
/// itself contains `{task_description}` is emitted literally.
pub(crate) fn substitute(template: &str, fields: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            fields
                .iter()
                .find(|(key, _)| *key == name)
                .map(|(_, value)| (close, *value))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Placeholder names that occur in `template` and are drawn from `known`.
pub(crate) fn placeholders<'a>(template: &str, known: &[&'a str]) -> alloc::vec::Vec<&'a str> {
    known
        .iter()
        .copied()
        .filter(|name| {
            let mut pat = String::from("{");
            pat.push_str(name);
            pat.push('}');
            template.contains(pat.as_str())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_not_rescanned() {
        let out = substitute("{a}|{b}|{c}", &[("a", "{b}"), ("b", "x")]);
        assert_eq!(out, "{b}|x|{c}");
    }

    #[test]
    fn unknown_braces_pass_through() {
        assert_eq!(
            substitute("Task: {Generated one-step task}", &[]),
            "Task: {Generated one-step task}"
        );
        assert_eq!(substitute("{ unclosed", &[("x", "y")]), "{ unclosed");
    }
}
