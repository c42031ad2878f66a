//! Minimal robots.txt support: `User-agent` groups with `Allow` and
//! `Disallow` path prefixes. The longest matching rule wins and `Allow` wins
//! ties. Wildcards are not interpreted.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    rules: Vec<(bool, String)>,
}

impl RobotsRules {
    pub fn allow_all() -> Self {
        RobotsRules::default()
    }

    /// Parses `text`, keeping the group for `agent` if one names it and the
    /// `*` group otherwise.
    pub fn parse(text: &str, agent: &str) -> Self {
        let agent = agent.to_ascii_lowercase();
        let mut specific: Vec<(bool, String)> = Vec::new();
        let mut generic: Vec<(bool, String)> = Vec::new();
        let mut found_specific = false;
        let mut group_agents: Vec<String> = Vec::new();
        let mut in_rules = false;

        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules {
                        group_agents.clear();
                        in_rules = false;
                    }
                    group_agents.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_rules = true;
                    if value.is_empty() {
                        continue;
                    }
                    let rule = (key == "allow", value.to_string());
                    let names_us = group_agents
                        .iter()
                        .any(|a| a != "*" && !a.is_empty() && agent.contains(a.as_str()));
                    if names_us {
                        found_specific = true;
                        specific.push(rule.clone());
                    }
                    if group_agents.iter().any(|a| a == "*") {
                        generic.push(rule);
                    }
                }
                _ => {}
            }
        }
        RobotsRules {
            rules: if found_specific { specific } else { generic },
        }
    }

    /// Whether `path` (path plus optional query) may be fetched.
    pub fn allows(&self, path: &str) -> bool {
        let mut best: Option<(usize, bool)> = None;
        for (allow, prefix) in &self.rules {
            if path.starts_with(prefix.as_str()) {
                let cand = (prefix.len(), *allow);
                best = match best {
                    Some(b) if b.0 > cand.0 || (b.0 == cand.0 && b.1) => Some(b),
                    _ => Some(cand),
                };
            }
        }
        best.is_none_or(|(_, allow)| allow)
    }
}
