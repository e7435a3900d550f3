use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Outcome,
    Covariate,
    Cluster,
    Exposure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Binary,
    Count,
    Categorical(Vec<String>),
    Continuous,
}

impl Kind {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Kind::Categorical(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, role: Role, kind: Kind) -> Self {
        Self { name: name.into(), role, kind }
    }

    pub fn outcome(name: impl Into<String>, kind: Kind) -> Self {
        Self::new(name, Role::Outcome, kind)
    }

    pub fn covariate(name: impl Into<String>, kind: Kind) -> Self {
        Self::new(name, Role::Covariate, kind)
    }

    /// Cluster labels are always read as text, so the kind is informational.
    pub fn cluster(name: impl Into<String>) -> Self {
        Self::new(name, Role::Cluster, Kind::Count)
    }

    pub fn exposure(name: impl Into<String>) -> Self {
        Self::new(name, Role::Exposure, Kind::Continuous)
    }
}

impl fmt::Display for ColumnSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Outcome => "outcome",
            Role::Covariate => "covariate",
            Role::Cluster => "cluster",
            Role::Exposure => "exposure",
        };
        match &self.kind {
            Kind::Binary => write!(f, "{} = {}:binary", self.name, role),
            Kind::Count => write!(f, "{} = {}:count", self.name, role),
            Kind::Continuous => write!(f, "{} = {}:continuous", self.name, role),
            Kind::Categorical(levels) => {
                write!(f, "{} = {}:categorical:{}", self.name, role, levels.join("|"))
            }
        }
    }
}

/// Checks the structural invariants of a schema list.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let count = |role: Role| schema.iter().filter(|c| c.role == role).count();
    if count(Role::Outcome) != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one outcome column, found {}",
            count(Role::Outcome)
        )));
    }
    if count(Role::Cluster) != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one cluster column, found {}",
            count(Role::Cluster)
        )));
    }
    if count(Role::Exposure) > 1 {
        return Err(Error::Schema("at most one exposure column is allowed".into()));
    }
    for (i, col) in schema.iter().enumerate() {
        if col.name.is_empty() {
            return Err(Error::Schema("empty column name".into()));
        }
        if schema[..i].iter().any(|c| c.name == col.name) {
            return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
        }
        if let Kind::Categorical(levels) = &col.kind {
            if levels.is_empty() && col.role != Role::Cluster {
                return Err(Error::Schema(format!(
                    "categorical column `{}` has no levels",
                    col.name
                )));
            }
        }
        if col.role == Role::Exposure && col.kind != Kind::Continuous && col.kind != Kind::Count {
            return Err(Error::Schema(format!(
                "exposure column `{}` must be numeric",
                col.name
            )));
        }
    }
    Ok(())
}

/// Parses the `column = role:kind[:levels|...]` schema format.
pub fn parse_schema(text: &str) -> Result<Vec<ColumnSchema>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Schema(format!("line {}: {msg}: `{raw}`", lineno + 1));
        let (name, spec) = line.split_once('=').ok_or_else(|| bad("expected `name = role:kind`"))?;
        let name = name.trim();
        let mut parts = spec.trim().splitn(3, ':');
        let role = match parts.next().map(str::trim) {
            Some("outcome") => Role::Outcome,
            Some("covariate") => Role::Covariate,
            Some("cluster") => Role::Cluster,
            Some("exposure") => Role::Exposure,
            _ => return Err(bad("unknown role")),
        };
        let kind = match (parts.next().map(str::trim), role) {
            (None, Role::Cluster) => Kind::Count,
            (None, Role::Exposure) => Kind::Continuous,
            (Some("binary"), _) => Kind::Binary,
            (Some("count"), _) => Kind::Count,
            (Some("continuous"), _) => Kind::Continuous,
            (Some("categorical"), _) => {
                let levels: Vec<String> = parts
                    .next()
                    .unwrap_or("")
                    .split('|')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                Kind::Categorical(levels)
            }
            _ => return Err(bad("unknown kind")),
        };
        out.push(ColumnSchema::new(name, role, kind));
    }
    validate_schema(&out)?;
    Ok(out)
}

pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSchema>> {
    parse_schema(&std::fs::read_to_string(path)?)
}

pub fn format_schema(schema: &[ColumnSchema]) -> String {
    let mut s = String::new();
    for col in schema {
        s.push_str(&col.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config_lines() {
        let text = "# case study\ny = outcome:binary\nsmi = covariate:binary\n\
                    band = covariate:categorical:low|mid|high\npractice = cluster\n";
        let schema = parse_schema(text).unwrap();
        assert_eq!(schema.len(), 4);
        assert_eq!(schema[1], ColumnSchema::covariate("smi", Kind::Binary));
        assert_eq!(
            schema[2].kind,
            Kind::Categorical(vec!["low".into(), "mid".into(), "high".into()])
        );
        let back = parse_schema(&format_schema(&schema)).unwrap();
        assert_eq!(back, schema);
    }

    #[test]
    fn rejects_two_outcomes_and_empty_levels() {
        assert!(parse_schema("a = outcome:binary\nb = outcome:binary\nc = cluster").is_err());
        assert!(parse_schema("a = outcome:binary\nb = covariate:categorical\nc = cluster").is_err());
        assert!(parse_schema("a = outcome:binary").is_err());
    }
}
