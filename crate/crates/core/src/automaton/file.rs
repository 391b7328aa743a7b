//! Versioned JSON text format for automata.
//!
//! ```text
//! { "version": 1,
//!   "vertices": ["v0", "a", "A"],
//!   "origin": "v0",
//!   "generators": [{"name": "a", "inverse": "A"}, {"name": "A", "inverse": "a"}],
//!   "edges": [{"from": "v0", "to": "a", "label": "a"}, ...] }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, MarkovAutomaton};
use crate::error::{Error, Result};
use crate::words::GeneratorTable;

pub const AUTOMATON_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomatonFile {
    pub version: u32,
    pub vertices: Vec<String>,
    pub origin: String,
    pub generators: Vec<GeneratorEntry>,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub name: String,
    pub inverse: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: String,
    pub to: String,
    pub label: String,
}

impl From<&MarkovAutomaton> for AutomatonFile {
    fn from(a: &MarkovAutomaton) -> Self {
        let g = a.generators();
        AutomatonFile {
            version: AUTOMATON_FORMAT_VERSION,
            vertices: a.vertex_names().to_vec(),
            origin: a.vertex_name(a.origin()).to_string(),
            generators: (0..g.len())
                .map(|i| GeneratorEntry {
                    name: g.name(i).to_string(),
                    inverse: g.name(g.inverse(i)).to_string(),
                })
                .collect(),
            edges: a
                .edges()
                .iter()
                .map(|e| EdgeEntry {
                    from: a.vertex_name(e.from).to_string(),
                    to: a.vertex_name(e.to).to_string(),
                    label: g.name(e.label).to_string(),
                })
                .collect(),
        }
    }
}

impl AutomatonFile {
    /// Resolves names and validates every automaton invariant.
    pub fn into_automaton(self) -> Result<MarkovAutomaton> {
        if self.version != AUTOMATON_FORMAT_VERSION {
            return Err(Error::input(format!(
                "unsupported automaton format version {} (expected {AUTOMATON_FORMAT_VERSION})",
                self.version
            )));
        }
        let names: Vec<String> = self.generators.iter().map(|g| g.name.clone()).collect();
        let inverse = self
            .generators
            .iter()
            .map(|g| {
                names.iter().position(|n| *n == g.inverse).ok_or_else(|| {
                    Error::invariant(format!(
                        "generator {} has unknown inverse {}",
                        g.name, g.inverse
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = GeneratorTable::new(names, inverse)?;

        let vertex = |name: &str| {
            self.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::invariant(format!("unknown vertex {name}")))
        };
        let origin = vertex(&self.origin)?;
        let edges = self
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    from: vertex(&e.from)?,
                    to: vertex(&e.to)?,
                    label: table.lookup(&e.label).ok_or_else(|| {
                        Error::invariant(format!(
                            "edge {} -> {} has unknown label {}",
                            e.from, e.to, e.label
                        ))
                    })?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MarkovAutomaton::new(self.vertices.clone(), origin, table, edges)
    }
}

pub fn save_automaton(a: &MarkovAutomaton, path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(&AutomatonFile::from(a)).expect("automaton file serialises");
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_automaton(path: &Path) -> Result<MarkovAutomaton> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: AutomatonFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_automaton()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{build_free_abelian_automaton, build_free_group_automaton};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.json");
        let a = build_free_group_automaton(1).unwrap();
        save_automaton(&a, &p).unwrap();
        assert_eq!(load_automaton(&p).unwrap(), a);

        let b = build_free_abelian_automaton(2).unwrap();
        save_automaton(&b, &p).unwrap();
        assert_eq!(load_automaton(&p).unwrap(), b);
    }

    fn load_str(text: &str) -> Result<MarkovAutomaton> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        fs::write(&p, text).unwrap();
        load_automaton(&p)
    }

    const GENS: &str = r#"[{"name":"a","inverse":"A"},{"name":"A","inverse":"a"}]"#;

    #[test]
    fn edge_into_origin_is_rejected() {
        let text = format!(
            r#"{{"version":1,"vertices":["v0","x"],"origin":"v0","generators":{GENS},
               "edges":[{{"from":"v0","to":"x","label":"a"}},{{"from":"x","to":"v0","label":"A"}}]}}"#
        );
        let err = load_str(&text).unwrap_err();
        assert!(
            matches!(&err, Error::Invariant(m) if m.contains("x -> v0")),
            "{err}"
        );
    }

    #[test]
    fn duplicate_edge_is_rejected() {
        let text = format!(
            r#"{{"version":1,"vertices":["v0","x"],"origin":"v0","generators":{GENS},
               "edges":[{{"from":"v0","to":"x","label":"a"}},{{"from":"v0","to":"x","label":"A"}}]}}"#
        );
        let err = load_str(&text).unwrap_err();
        assert!(
            matches!(&err, Error::Invariant(m) if m.contains("duplicate edge v0 -> x")),
            "{err}"
        );
    }

    #[test]
    fn unknown_fields_and_bad_json_are_parse_errors() {
        let text = format!(
            r#"{{"version":1,"vertices":["v0"],"origin":"v0","generators":{GENS},"edges":[],"extra":1}}"#
        );
        assert!(matches!(load_str(&text), Err(Error::Parse { .. })));
        assert!(matches!(load_str("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_label_and_version() {
        let text = format!(
            r#"{{"version":1,"vertices":["v0","x"],"origin":"v0","generators":{GENS},
               "edges":[{{"from":"v0","to":"x","label":"q"}}]}}"#
        );
        assert!(matches!(load_str(&text), Err(Error::Invariant(m)) if m.contains("label q")));
        let text = format!(
            r#"{{"version":7,"vertices":["v0"],"origin":"v0","generators":{GENS},"edges":[]}}"#
        );
        assert!(matches!(load_str(&text), Err(Error::Input(_))));
    }
}
