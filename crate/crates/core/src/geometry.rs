//! Planar network geometry shared by renderers and the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("link {link} references unknown node {node}")]
    DanglingLink { link: String, node: String },
    #[error("duplicate id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEnds {
    pub from: String,
    pub to: String,
}

/// Node coordinates (meters) and link endpoints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub nodes: BTreeMap<String, Point>,
    pub links: BTreeMap<String, LinkEnds>,
}

#[derive(Serialize, Deserialize)]
struct NodeRow {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct LinkRow {
    id: String,
    from: String,
    to: String,
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    nodes: Vec<NodeRow>,
    links: Vec<LinkRow>,
}

impl NetworkGeometry {
    pub fn new(nodes: BTreeMap<String, Point>, links: BTreeMap<String, LinkEnds>) -> Result<Self, GeometryError> {
        let g = Self { nodes, links };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (id, l) in &self.links {
            for n in [&l.from, &l.to] {
                if !self.nodes.contains_key(n) {
                    return Err(GeometryError::DanglingLink {
                        link: id.clone(),
                        node: n.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// `(min_x, min_y, max_x, max_y)`; all zero for an empty geometry.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut it = self.nodes.values();
        let Some(first) = it.next() else {
            return (0.0, 0.0, 0.0, 0.0);
        };
        it.fold((first.x, first.y, first.x, first.y), |(a, b, c, d), p| {
            (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
        })
    }

    /// Reads `{nodes: [{id,x,y}], links: [{id,from,to,..}]}`; extra link
    /// fields (as in a full network file) are ignored.
    pub fn from_json_str(s: &str) -> Result<Self, GeometryError> {
        let file: GeometryFile = serde_json::from_str(s).map_err(|e| GeometryError::Parse(e.to_string()))?;
        let mut nodes = BTreeMap::new();
        for n in file.nodes {
            if nodes.insert(n.id.clone(), Point { x: n.x, y: n.y }).is_some() {
                return Err(GeometryError::Duplicate(n.id));
            }
        }
        let mut links = BTreeMap::new();
        for l in file.links {
            if links
                .insert(l.id.clone(), LinkEnds { from: l.from, to: l.to })
                .is_some()
            {
                return Err(GeometryError::Duplicate(l.id));
            }
        }
        Self::new(nodes, links)
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let s = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        let file = GeometryFile {
            nodes: self
                .nodes
                .iter()
                .map(|(id, p)| NodeRow { id: id.clone(), x: p.x, y: p.y })
                .collect(),
            links: self
                .links
                .iter()
                .map(|(id, l)| LinkRow {
                    id: id.clone(),
                    from: l.from.clone(),
                    to: l.to.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("geometry serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dangling_link_rejected() {
        let s = r#"{"nodes":[{"id":"a","x":0,"y":0}],"links":[{"id":"r","from":"a","to":"b"}]}"#;
        assert!(matches!(
            NetworkGeometry::from_json_str(s),
            Err(GeometryError::DanglingLink { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_bounds() {
        let s = r#"{"nodes":[{"id":"a","x":0,"y":5},{"id":"b","x":10,"y":-5}],
                    "links":[{"id":"r","from":"a","to":"b","length":3}]}"#;
        let g = NetworkGeometry::from_json_str(s).unwrap();
        assert_eq!(g.bounds(), (0.0, -5.0, 10.0, 5.0));
        let back = NetworkGeometry::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(back, g);
    }
}
