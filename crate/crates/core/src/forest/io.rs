use std::fs;
use std::path::Path;

use super::{ForestModel, ForestParams, Node, Tree};
use crate::error::{Error, Result};

const HEADER: &str = "# rangeloc forest v1";

/// Text form of a model. Floats use shortest round-trip formatting, so equal
/// models always serialize to identical bytes.
pub fn forest_to_string(m: &ForestModel) -> String {
    let p = &m.params;
    let mut s = format!("{HEADER}\nrange {}\ncolumns {}\n", m.range, m.columns.join(","));
    s += &format!(
        "params n_trees={} max_depth={} min_leaf={} features_per_split={} seed={} bootstrap={}\n",
        p.n_trees,
        p.max_depth,
        p.min_leaf,
        p.features_per_split.map_or("auto".to_string(), |k| k.to_string()),
        p.seed,
        p.bootstrap
    );
    let medians: Vec<String> = m.medians.iter().map(|v| v.to_string()).collect();
    s += &format!("medians {}\n", medians.join(" "));
    s += &format!("targets {} {}\n", m.target_min, m.target_max);
    for (i, t) in m.trees.iter().enumerate() {
        s += &format!("tree {i} {}\n", t.nodes.len());
        for n in &t.nodes {
            match n {
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => s += &format!("S {feature} {threshold} {right}\n"),
                Node::Leaf { value, count } => s += &format!("L {value} {count}\n"),
            }
        }
    }
    s
}

pub fn write_forest(path: &Path, m: &ForestModel) -> Result<()> {
    fs::write(path, forest_to_string(m)).map_err(|e| Error::io(path, e))
}

pub fn read_forest(path: &Path) -> Result<ForestModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_forest(path, &text)
}

fn parse_forest(path: &Path, text: &str) -> Result<ForestModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of file, expected {what}")))
    };
    let bad = |line: usize, msg: &str| Error::parse(path, line, msg.to_string());
    fn num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
        s.parse().map_err(|_| Error::parse(path, line, format!("invalid number `{s}`")))
    }

    let (ln, h) = next("header")?;
    if h != HEADER {
        return Err(bad(ln, "not a rangeloc forest file"));
    }
    let (ln, l) = next("range")?;
    let range: f64 = num(path, ln, l.strip_prefix("range ").ok_or_else(|| bad(ln, "expected `range`"))?)?;
    let (ln, l) = next("columns")?;
    let columns: Vec<String> = l
        .strip_prefix("columns ")
        .ok_or_else(|| bad(ln, "expected `columns`"))?
        .split(',')
        .map(str::to_string)
        .collect();

    let (ln, l) = next("params")?;
    let mut params = ForestParams::default();
    for kv in l.strip_prefix("params ").ok_or_else(|| bad(ln, "expected `params`"))?.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(ln, "expected key=value"))?;
        match k {
            "n_trees" => params.n_trees = num(path, ln, v)?,
            "max_depth" => params.max_depth = num(path, ln, v)?,
            "min_leaf" => params.min_leaf = num(path, ln, v)?,
            "features_per_split" => {
                params.features_per_split = if v == "auto" { None } else { Some(num(path, ln, v)?) }
            }
            "seed" => params.seed = num(path, ln, v)?,
            "bootstrap" => params.bootstrap = num(path, ln, v)?,
            _ => return Err(bad(ln, "unknown parameter")),
        }
    }
    let (ln, l) = next("medians")?;
    let medians = l
        .strip_prefix("medians")
        .ok_or_else(|| bad(ln, "expected `medians`"))?
        .split_whitespace()
        .map(|v| num(path, ln, v))
        .collect::<Result<Vec<f64>>>()?;
    let (ln, l) = next("targets")?;
    let t: Vec<f64> = l
        .strip_prefix("targets ")
        .ok_or_else(|| bad(ln, "expected `targets`"))?
        .split_whitespace()
        .map(|v| num(path, ln, v))
        .collect::<Result<_>>()?;
    if t.len() != 2 {
        return Err(bad(ln, "expected two target bounds"));
    }

    let mut trees = Vec::new();
    while let Ok((ln, l)) = next("tree") {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 || f[0] != "tree" {
            return Err(bad(ln, "expected `tree <index> <node count>`"));
        }
        let count: usize = num(path, ln, f[2])?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = next("node")?;
            let f: Vec<&str> = l.split_whitespace().collect();
            let node = match f.as_slice() {
                ["S", feat, thr, right] => {
                    let right: usize = num(path, ln, right)?;
                    let feature: usize = num(path, ln, feat)?;
                    if right >= count || right <= nodes.len() || feature >= columns.len() {
                        return Err(bad(ln, "split refers outside the tree"));
                    }
                    Node::Split {
                        feature,
                        threshold: num(path, ln, thr)?,
                        right,
                    }
                }
                ["L", value, n] => Node::Leaf {
                    value: num(path, ln, value)?,
                    count: num(path, ln, n)?,
                },
                _ => return Err(bad(ln, "malformed node")),
            };
            nodes.push(node);
        }
        if nodes.last().is_some_and(|n| !matches!(n, Node::Leaf { .. })) || nodes.is_empty() {
            return Err(bad(ln, "tree must end with a leaf"));
        }
        trees.push(Tree { nodes });
    }
    if trees.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "model has no trees".into(),
        });
    }
    Ok(ForestModel {
        range,
        columns,
        params,
        medians,
        target_min: t[0],
        target_max: t[1],
        trees,
    })
}
