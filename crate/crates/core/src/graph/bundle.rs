//! On-disk bundle format.
//!
//! ```text
//! nodes.csv        id,label,f0,...,f{d-1}
//! edges.csv        src,dst
//! noise_edges.csv  src,dst          (optional provenance of injected edges)
//! ```
//!
//! Node ids must be exactly `0..N` (rows in any order). Edges are undirected;
//! a pair listed twice is kept once with a warning.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use super::{edge_key, Dataset, EdgeKey, FeatureMatrix, LabelStore, WeightedGraph};
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const NOISE_FILE: &str = "noise_edges.csv";
pub const WEIGHTED_EDGES_FILE: &str = "edges_weighted.csv";

fn bundle_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Bundle {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?)
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, field: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| bundle_err(path, format!("line {line}: cannot parse {field} from {raw:?}")))
}

/// Reads `nodes.csv` and `edges.csv` from `dir`. All edge weights are 1.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let nodes_path = require(dir.join(NODES_FILE))?;
    let edges_path = require(dir.join(EDGES_FILE))?;

    let mut rdr = reader(&nodes_path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(bundle_err(&nodes_path, "header must be id,label,f0,...,f{d-1}"));
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{k}") {
            return Err(bundle_err(&nodes_path, format!("feature column {k} is named {name:?}")));
        }
    }
    let dim = header.len() - 2;

    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 2 {
            return Err(bundle_err(&nodes_path, format!("line {line}: expected {} fields", dim + 2)));
        }
        let id: usize = parse(&nodes_path, line, "id", &rec[0])?;
        let label: usize = parse(&nodes_path, line, "label", &rec[1])?;
        let feats = rec
            .iter()
            .skip(2)
            .map(|f| parse::<f64>(&nodes_path, line, "feature", f))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, label, feats));
    }
    let n = rows.len();
    rows.sort_by_key(|r| r.0);
    for (expected, row) in rows.iter().enumerate() {
        if row.0 != expected {
            return Err(bundle_err(
                &nodes_path,
                format!("node ids must be contiguous 0..{n}; found {} where {expected} was expected", row.0),
            ));
        }
    }
    let labels = LabelStore::new(rows.iter().map(|r| r.1).collect())?;
    let mut data = Vec::with_capacity(n * dim);
    for (_, _, f) in &rows {
        data.extend_from_slice(f);
    }
    let features = FeatureMatrix::new(DenseMatrix::new(n, dim, data)?)?;

    let pairs = read_pairs(&edges_path)?;
    let unique: HashSet<EdgeKey> = pairs.iter().map(|&(i, j)| edge_key(i, j)).collect();
    if unique.len() != pairs.len() {
        warn!(
            "{}: {} duplicate edge rows merged",
            edges_path.display(),
            pairs.len() - unique.len()
        );
    }
    let graph = WeightedGraph::from_edges(n, pairs)?;
    Dataset::new(graph, features, labels)
}

fn read_pairs(path: &Path) -> Result<Vec<EdgeKey>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 2 || &header[0] != "src" || &header[1] != "dst" {
        return Err(bundle_err(path, "header must be src,dst"));
    }
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let src: usize = parse(path, line, "src", &rec[0])?;
        let dst: usize = parse(path, line, "dst", &rec[1])?;
        pairs.push((src, dst));
    }
    Ok(pairs)
}

/// Writes the bundle in canonical form: nodes by id, edges as sorted `src < dst` pairs.
pub fn save_bundle(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut out = String::new();
    out.push_str("id,label");
    for k in 0..data.features.dim() {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for i in 0..data.num_nodes() {
        out.push_str(&format!("{i},{}", data.labels.get(i)));
        for v in data.features.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_atomic(&dir.join(NODES_FILE), out.as_bytes())?;
    write_pairs(&dir.join(EDGES_FILE), &data.graph.edge_list())
}

/// Writes the provenance list of injected edges.
pub fn save_noise_edges(dir: impl AsRef<Path>, edges: &[EdgeKey]) -> Result<()> {
    let mut sorted: Vec<EdgeKey> = edges.iter().map(|&(i, j)| edge_key(i, j)).collect();
    sorted.sort_unstable();
    sorted.dedup();
    write_pairs(&dir.as_ref().join(NOISE_FILE), &sorted)
}

/// Reads `noise_edges.csv` if the bundle has one.
pub fn load_noise_edges(dir: impl AsRef<Path>) -> Result<Option<Vec<EdgeKey>>> {
    let path = dir.as_ref().join(NOISE_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let mut pairs: Vec<EdgeKey> = read_pairs(&path)?.into_iter().map(|(i, j)| edge_key(i, j)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(Some(pairs))
}

fn write_pairs(path: &Path, pairs: &[EdgeKey]) -> Result<()> {
    let mut out = String::from("src,dst\n");
    for (i, j) in pairs {
        out.push_str(&format!("{i},{j}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// `src,dst,weight` with six decimals, one row per stored pair.
pub fn write_weighted_edges(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    let mut out = String::from("src,dst,weight\n");
    for (i, j, w) in graph.edges() {
        out.push_str(&format!("{i},{j},{w:.6}\n"));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, nodes: &str, edges: &str) {
        fs::write(dir.join(NODES_FILE), nodes).unwrap();
        fs::write(dir.join(EDGES_FILE), edges).unwrap();
    }

    const NODES3: &str = "id,label,f0,f1\n0,0,1.0,0\n1,1,0,1\n2,0,0.5,0.5\n";

    #[test]
    fn small_bundle_loads() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), NODES3, "src,dst\n0,1\n");
        let d = load_bundle(tmp.path()).unwrap();
        assert_eq!(d.num_nodes(), 3);
        assert_eq!(d.graph.num_edges(), 1);
        assert_eq!(d.graph.weight(0, 1), 1.0);
        assert_eq!(d.features.row(2), &[0.5, 0.5]);
        assert_eq!(d.labels.as_slice(), &[0, 1, 0]);
    }

    #[test]
    fn self_loop_row_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), NODES3, "src,dst\n0,0\n");
        let err = load_bundle(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn reversed_duplicate_is_merged() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), NODES3, "src,dst\n0,1\n1,0\n");
        assert_eq!(load_bundle(tmp.path()).unwrap().graph.num_edges(), 1);
    }

    #[test]
    fn malformed_bundles_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(Error::MissingFile(_))));

        write(tmp.path(), "id,label,f0\n0,0,1\n2,1,1\n", "src,dst\n");
        assert!(load_bundle(tmp.path()).unwrap_err().to_string().contains("contiguous"));

        write(tmp.path(), NODES3, "src,dst\n0,3\n");
        assert!(matches!(load_bundle(tmp.path()), Err(Error::NodeOutOfRange { node: 3, .. })));

        write(tmp.path(), "id,label,g0\n0,0,1\n1,1,1\n", "src,dst\n");
        assert!(load_bundle(tmp.path()).is_err());
    }

    #[test]
    fn save_then_load_then_save_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "id,label,f0,f1\n2,0,0.1,3\n0,1,-2.5,1e-3\n1,1,0,0\n", "src,dst\n2,0\n1,2\n");
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        save_bundle(&a, &load_bundle(tmp.path()).unwrap()).unwrap();
        save_bundle(&b, &load_bundle(&a).unwrap()).unwrap();
        for f in [NODES_FILE, EDGES_FILE] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
        assert_eq!(fs::read_to_string(a.join(EDGES_FILE)).unwrap(), "src,dst\n0,2\n1,2\n");
    }

    #[test]
    fn weighted_export_format() {
        let tmp = tempfile::tempdir().unwrap();
        let g = WeightedGraph::from_weighted_edges(3, [(2, 0, 0.25), (0, 1, 1.0 / 3.0)]).unwrap();
        let path = tmp.path().join(WEIGHTED_EDGES_FILE);
        write_weighted_edges(&path, &g).unwrap();
        assert_eq!(
            fs::read_to_string(path).unwrap(),
            "src,dst,weight\n0,1,0.333333\n0,2,0.250000\n"
        );
    }

    #[test]
    fn noise_provenance_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(load_noise_edges(tmp.path()).unwrap(), None);
        save_noise_edges(tmp.path(), &[(5, 1), (0, 3)]).unwrap();
        assert_eq!(load_noise_edges(tmp.path()).unwrap(), Some(vec![(0, 3), (1, 5)]));
    }
}
