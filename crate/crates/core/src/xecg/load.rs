//! Interchange documents: per-unit call graphs and bridge maps.

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::Value;

use super::{Bridge, BridgeMap, UnitGraph, UnitKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pointer}: {msg}")]
pub struct SchemaError {
    /// JSON pointer to the offending value, `""` for the document root.
    pub pointer: String,
    pub msg: String,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn err(pointer: impl Into<String>, msg: impl Into<String>) -> SchemaError {
    SchemaError {
        pointer: pointer.into(),
        msg: msg.into(),
    }
}

fn string_at<'a>(v: &'a Value, ptr: &str) -> Result<&'a str, SchemaError> {
    match v.as_str() {
        Some(s) if !s.is_empty() => Ok(s),
        Some(_) => Err(err(ptr, "empty string")),
        None => Err(err(ptr, "expected a string")),
    }
}

fn string_list(doc: &Value, key: &str, required: bool) -> Result<Option<Vec<String>>, SchemaError> {
    let ptr = format!("/{key}");
    let Some(v) = doc.get(key) else {
        return if required {
            Err(err(ptr, "missing"))
        } else {
            Ok(None)
        };
    };
    let arr = v.as_array().ok_or_else(|| err(&ptr, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, s)| string_at(s, &format!("{ptr}/{i}")).map(str::to_string))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Validate and convert one call-graph document.
///
/// Edge callees must be declared in `nodes` or in the optional `imports`
/// list; imports name functions defined in other units.
pub fn parse_unit_graph(doc: &Value) -> Result<UnitGraph, SchemaError> {
    if !doc.is_object() {
        return Err(err("", "expected an object"));
    }
    let unit = string_at(
        doc.get("unit").ok_or_else(|| err("/unit", "missing"))?,
        "/unit",
    )?
    .to_string();
    let kind = match doc.get("kind").and_then(Value::as_str) {
        Some("python") => UnitKind::Python,
        Some("binary") => UnitKind::Binary,
        Some(_) => return Err(err("/kind", "expected \"python\" or \"binary\"")),
        None => return Err(err("/kind", "missing")),
    };
    let node_list = string_list(doc, "nodes", true)?.unwrap();
    let mut nodes = BTreeSet::new();
    for (i, n) in node_list.into_iter().enumerate() {
        if !nodes.insert(n) {
            return Err(err(format!("/nodes/{i}"), "duplicate node"));
        }
    }
    let imports: BTreeSet<String> = string_list(doc, "imports", false)?
        .unwrap_or_default()
        .into_iter()
        .collect();
    let exports = match string_list(doc, "exports", false)? {
        None => nodes.clone(),
        Some(list) => {
            let mut out = BTreeSet::new();
            for (i, e) in list.into_iter().enumerate() {
                if !nodes.contains(&e) {
                    return Err(err(
                        format!("/exports/{i}"),
                        format!("export {e:?} is not a node"),
                    ));
                }
                out.insert(e);
            }
            out
        }
    };
    let edges_v = doc.get("edges").ok_or_else(|| err("/edges", "missing"))?;
    let edges_arr = edges_v
        .as_array()
        .ok_or_else(|| err("/edges", "expected an array"))?;
    let mut g = UnitGraph {
        unit,
        kind,
        nodes,
        edges: BTreeSet::new(),
        external: BTreeSet::new(),
        exports,
    };
    for (i, e) in edges_arr.iter().enumerate() {
        let ptr = format!("/edges/{i}");
        let pair = e
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| err(&ptr, "expected [caller, callee]"))?;
        let caller = string_at(&pair[0], &format!("{ptr}/0"))?;
        let callee = string_at(&pair[1], &format!("{ptr}/1"))?;
        if !g.nodes.contains(caller) {
            return Err(err(
                format!("{ptr}/0"),
                format!("caller {caller:?} is not a node"),
            ));
        }
        if g.nodes.contains(callee) {
            g.edges.insert((caller.to_string(), callee.to_string()));
        } else if imports.contains(callee) {
            g.external.insert((caller.to_string(), callee.to_string()));
        } else {
            return Err(err(
                format!("{ptr}/1"),
                format!("callee {callee:?} is neither a node nor an import"),
            ));
        }
    }
    Ok(g)
}

pub fn load_call_graph_str(text: &str) -> Result<UnitGraph, LoadError> {
    let v: Value = serde_json::from_str(text)?;
    Ok(parse_unit_graph(&v)?)
}

pub fn load_call_graph(path: &Path) -> Result<UnitGraph, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_call_graph_str(&text)
}

/// Every `*.json` file in `dir`, in file-name order.
pub fn load_call_graph_dir(dir: &Path) -> Result<Vec<UnitGraph>, LoadError> {
    let io = |source| LoadError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| load_call_graph(p)).collect()
}

pub fn parse_bridge_map(doc: &Value) -> Result<BridgeMap, SchemaError> {
    let entries = doc
        .get("entries")
        .ok_or_else(|| err("/entries", "missing"))?
        .as_array()
        .ok_or_else(|| err("/entries", "expected an array"))?;
    let mut out = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let ptr = format!("/entries/{i}");
        let a = e
            .as_array()
            .filter(|a| a.len() == 4)
            .ok_or_else(|| err(&ptr, "expected [pyUnit, pyFn, binUnit, binSym]"))?;
        let s = |j: usize| string_at(&a[j], &format!("{ptr}/{j}")).map(str::to_string);
        out.push(Bridge {
            py_unit: s(0)?,
            py_fn: s(1)?,
            bin_unit: s(2)?,
            bin_sym: s(3)?,
        });
    }
    Ok(BridgeMap { entries: out })
}

pub fn load_bridge_map(path: &Path) -> Result<BridgeMap, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let v: Value = serde_json::from_str(&text)?;
    Ok(parse_bridge_map(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn pointer(v: Value) -> String {
        parse_unit_graph(&v).unwrap_err().pointer
    }

    #[test]
    fn minimal() {
        let g = parse_unit_graph(
            &json!({"unit": "a", "kind": "python", "nodes": ["a.f"], "edges": []}),
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.exports.len(), 1);
    }

    #[test]
    fn schema_errors_carry_pointers() {
        assert_eq!(pointer(json!([])), "");
        assert_eq!(
            pointer(json!({"kind": "python", "nodes": [], "edges": []})),
            "/unit"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "java", "nodes": [], "edges": []})),
            "/kind"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "python", "nodes": ["x", 3], "edges": []})),
            "/nodes/1"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "python", "nodes": ["x", "x"], "edges": []})),
            "/nodes/1"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "python", "nodes": ["x"], "edges": [["x", "y"]]})),
            "/edges/0/1"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "python", "nodes": ["x"], "edges": [["y", "x"]]})),
            "/edges/0/0"
        );
        assert_eq!(
            pointer(json!({"unit": "a", "kind": "python", "nodes": ["x"], "edges": [["x"]]})),
            "/edges/0"
        );
        assert_eq!(
            pointer(
                json!({"unit": "a", "kind": "binary", "nodes": ["x"], "edges": [], "exports": ["z"]})
            ),
            "/exports/0"
        );
    }

    #[test]
    fn imports_allow_external_callees() {
        let g = parse_unit_graph(&json!({
            "unit": "b", "kind": "binary", "nodes": ["f", "g"], "imports": ["xmlBuildQName"],
            "edges": [["f", "g"], ["g", "xmlBuildQName"]], "exports": ["f"]
        }))
        .unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.external.len(), 1);
        assert_eq!(g.exports.len(), 1);
    }

    #[test]
    fn bridge_maps() {
        let b = parse_bridge_map(&json!({"entries": [["igraph", "igraph.Graph.Read_Ncol", "igraph:_igraph.so", "igraphmodule_Graph_Read_Ncol"]]})).unwrap();
        assert_eq!(b.entries.len(), 1);
        let e = parse_bridge_map(&json!({"entries": [["a", "b", "c"]]})).unwrap_err();
        assert_eq!(e.pointer, "/entries/0");
        let e = parse_bridge_map(&json!({"entries": [["a", "b", "c", ""]]})).unwrap_err();
        assert_eq!(e.pointer, "/entries/0/3");
    }
}
