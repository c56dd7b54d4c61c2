//! Plain-text file formats and the output manifest.
//!
//! Every file starts with a block of `# key: value` lines followed by
//! whitespace-separated rows. Floats are written with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64` exactly; undefined values are
//! written as `NaN`.
//!
//! * snapshots: columns `x y rho vx vy S`, one row per mesh point, row-major
//!   in `y` then `x`;
//! * trajectories: columns `t id x y rho S Q Lq`, sorted by `(t, id)`;
//! * field maps: `x y` followed by named analysis columns, same row order
//!   as snapshots, with one `# column <name>: <meaning>` line per column;
//! * tables: one row per time, columns listed in the header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::FieldMap;
use crate::error::{Error, Result};
use crate::hydrodynamics::TrajectoryRecord;
use crate::snapshot::{FieldSnapshot, Mesh, Source};

pub const SNAPSHOT_COLUMNS: [&str; 6] = ["x", "y", "rho", "vx", "vy", "S"];
pub const TRAJECTORY_COLUMNS: [&str; 8] = ["t", "id", "x", "y", "rho", "S", "Q", "Lq"];
pub const MANIFEST_NAME: &str = "manifest.toml";

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    let mut s = String::new();
    push_f64(&mut s, x);
    s
}

fn push_f64(out: &mut String, x: f64) {
    if x.is_nan() {
        out.push_str("NaN");
    } else {
        let _ = write!(out, "{x:.16e}");
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        push_f64(out, v);
    }
    out.push('\n');
}

fn mesh_header(out: &mut String, mesh: &Mesh) {
    let _ = writeln!(out, "# nx: {}", mesh.nx);
    let _ = writeln!(out, "# ny: {}", mesh.ny);
    let _ = writeln!(out, "# origin: {} {}", fmt_f64(mesh.origin[0]), fmt_f64(mesh.origin[1]));
    let _ = writeln!(
        out,
        "# spacing: {} {}",
        fmt_f64(mesh.spacing[0]),
        fmt_f64(mesh.spacing[1])
    );
}

pub fn snapshot_to_string(snap: &FieldSnapshot) -> String {
    let m = &snap.mesh;
    let mut out = String::with_capacity(m.len() * 6 * 24 + 512);
    out.push_str("# kind: snapshot\n");
    let _ = writeln!(out, "# time: {}", fmt_f64(snap.time));
    let _ = writeln!(out, "# source: {}", snap.source.label());
    mesh_header(&mut out, m);
    for (key, value) in &snap.metadata {
        let _ = writeln!(out, "# meta.{key}: {}", fmt_f64(*value));
    }
    let _ = writeln!(out, "# columns: {}", SNAPSHOT_COLUMNS.join(" "));
    for j in 0..m.ny {
        for i in 0..m.nx {
            let k = m.index(i, j);
            let [x, y] = m.point(i, j);
            push_row(&mut out, [x, y, snap.rho[k], snap.vx[k], snap.vy[k], snap.s[k]]);
        }
    }
    out
}

pub fn field_map_to_string(map: &FieldMap, kind: &str) -> String {
    let m = &map.mesh;
    let width = 2 + map.columns.len();
    let mut out = String::with_capacity(m.len() * width * 24 + 1024);
    let _ = writeln!(out, "# kind: {kind}");
    let _ = writeln!(out, "# time: {}", fmt_f64(map.time));
    let _ = writeln!(out, "# source: {}", map.source.label());
    mesh_header(&mut out, m);
    for (name, _) in &map.columns {
        let _ = writeln!(out, "# column {name}: {}", describe_column(name));
    }
    let names: Vec<&str> = map.columns.iter().map(|(n, _)| n.as_str()).collect();
    let _ = writeln!(out, "# columns: x y {}", names.join(" "));
    for j in 0..m.ny {
        for i in 0..m.nx {
            let k = m.index(i, j);
            let [x, y] = m.point(i, j);
            push_row(
                &mut out,
                [x, y].into_iter().chain(map.columns.iter().map(|(_, v)| v[k])),
            );
        }
    }
    out
}

/// Meaning of the analysis columns, for file headers.
pub fn describe_column(name: &str) -> &'static str {
    match name {
        "jx" | "jy" => "probability flux rho v",
        "div_j" => "divergence of the flux (negative: density collected)",
        "P" => "quantum pressure -(hbar^2/4)(rho_xx/m0 + rho_yy/m)",
        "ux" | "uy" => "osmotic velocity -(hbar/2m_i) d_i ln rho",
        "w_abs" => "magnitude of the complex velocity w = v + i u",
        "Pi_00" | "Pi_01" | "Pi_11" => "stress tensor P delta_ij + sqrt(m_i m_j) rho Re(w_i conj(w_j))",
        "Pi_c_00" | "Pi_c_01" | "Pi_c_11" => "classical stress sqrt(m_i m_j) rho v_i v_j",
        "Pi_q_00" | "Pi_q_01" | "Pi_q_11" => "quantum stress P delta_ij + sqrt(m_i m_j) rho u_i u_j",
        "res_x" | "res_y" => "momentum balance residual d_t(rho m_i v_i) + d_j Pi_ji + rho d_i V",
        "dt_mom_x" | "dt_mom_y" => "momentum rate d_t(rho m_i v_i)",
        "div_pi_x" | "div_pi_y" => "stress divergence d_j Pi_ji",
        "rho_gradV_x" | "rho_gradV_y" => "potential force density rho d_i V",
        _ => "",
    }
}

pub fn trajectories_to_string(records: &[TrajectoryRecord], lineages: usize) -> String {
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.id.cmp(&b.id)));
    let mut out = String::with_capacity(records.len() * 8 * 24 + 256);
    out.push_str("# kind: trajectories\n");
    let _ = writeln!(out, "# lineages: {lineages}");
    let _ = writeln!(out, "# columns: {}", TRAJECTORY_COLUMNS.join(" "));
    for r in sorted {
        push_f64(&mut out, r.time);
        let _ = write!(out, " {} ", r.id);
        push_row(&mut out, [r.position[0], r.position[1], r.rho, r.action, r.q, r.lq]);
    }
    out
}

/// A table with named columns and free-form `# key: value` header lines.
pub fn table_to_string(kind: &str, header: &[(String, String)], columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kind: {kind}");
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "# columns: {}", columns.join(" "));
    for r in rows {
        push_row(&mut out, r.iter().copied());
    }
    out
}

/// Header lines and data rows of a text file, with 1-based line numbers.
struct Parsed<'a> {
    path: &'a Path,
    header: BTreeMap<String, (usize, String)>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Parsed<'a> {
    fn new(text: &'a str, path: &'a Path) -> Result<Self> {
        let mut header = BTreeMap::new();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            if let Some(h) = line.strip_prefix('#') {
                let Some((k, v)) = h.split_once(':') else {
                    return Err(format_error(path, n, "header line without ':'"));
                };
                header.insert(k.trim().to_string(), (n, v.trim().to_string()));
            } else if !line.trim().is_empty() {
                rows.push((n, line.split_whitespace().collect()));
            }
        }
        Ok(Self { path, header, rows })
    }

    fn err(&self, line: usize, detail: impl Into<String>) -> Error {
        format_error(self.path, line, detail)
    }

    fn get(&self, key: &str) -> Result<(usize, &str)> {
        self.header
            .get(key)
            .map(|(n, v)| (*n, v.as_str()))
            .ok_or_else(|| self.err(0, format!("missing header key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (n, v) = self.get(key)?;
        v.parse().map_err(|_| self.err(n, format!("bad value {v:?} for {key}")))
    }

    fn pair(&self, key: &str) -> Result<[f64; 2]> {
        let (n, v) = self.get(key)?;
        let vals: Vec<f64> = v
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err(n, format!("bad value {v:?} for {key}")))?;
        match vals.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => Err(self.err(n, format!("{key} needs two numbers"))),
        }
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let (n, k) = self.get("kind")?;
        if k != kind {
            return Err(self.err(n, format!("expected a {kind} file, found {k:?}")));
        }
        Ok(())
    }

    fn columns(&self) -> Result<Vec<String>> {
        Ok(self.get("columns")?.1.split_whitespace().map(String::from).collect())
    }

    fn mesh(&self) -> Result<Mesh> {
        Ok(Mesh {
            origin: self.pair("origin")?,
            spacing: self.pair("spacing")?,
            nx: self.parse("nx")?,
            ny: self.parse("ny")?,
        })
    }

    fn number(&self, line: usize, s: &str) -> Result<f64> {
        s.parse().map_err(|_| self.err(line, format!("bad number {s:?}")))
    }

    /// Mesh rows with their coordinates checked against the header.
    fn mesh_rows(&self, mesh: &Mesh, width: usize) -> Result<Vec<Vec<f64>>> {
        if self.rows.len() != mesh.len() {
            let line = self.rows.last().map_or(0, |r| r.0);
            return Err(self.err(
                line,
                format!(
                    "expected {} rows for a {}x{} mesh, found {}",
                    mesh.len(),
                    mesh.nx,
                    mesh.ny,
                    self.rows.len()
                ),
            ));
        }
        let mut out = Vec::with_capacity(self.rows.len());
        for (k, (n, fields)) in self.rows.iter().enumerate() {
            if fields.len() != width {
                return Err(self.err(*n, format!("expected {width} columns, found {}", fields.len())));
            }
            let vals = fields
                .iter()
                .map(|s| self.number(*n, s))
                .collect::<Result<Vec<f64>>>()?;
            let p = mesh.point_at(k);
            for d in 0..2 {
                if (vals[d] - p[d]).abs() > 1e-9 * p[d].abs().max(mesh.spacing[d]) {
                    return Err(self.err(*n, format!("coordinate {} does not match mesh point {:?}", vals[d], p)));
                }
            }
            out.push(vals);
        }
        Ok(out)
    }
}

fn format_error(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

pub fn parse_snapshot(text: &str, path: &Path) -> Result<FieldSnapshot> {
    let p = Parsed::new(text, path)?;
    p.expect_kind("snapshot")?;
    let columns = p.columns()?;
    if columns != SNAPSHOT_COLUMNS {
        return Err(p.err(p.get("columns")?.0, format!("unexpected columns {columns:?}")));
    }
    let (n, src) = p.get("source")?;
    let source: Source = src.parse().map_err(|e: String| p.err(n, e))?;
    let mesh = p.mesh()?;
    let mut snap = FieldSnapshot::empty(p.parse("time")?, source, mesh);
    for (key, (n, value)) in &p.header {
        if let Some(name) = key.strip_prefix("meta.") {
            let v = value
                .parse()
                .map_err(|_| p.err(*n, format!("bad value {value:?} for {key}")))?;
            snap.metadata.insert(name.to_string(), v);
        }
    }
    for (k, row) in p.mesh_rows(&mesh, 6)?.into_iter().enumerate() {
        snap.rho[k] = row[2];
        snap.vx[k] = row[3];
        snap.vy[k] = row[4];
        snap.s[k] = row[5];
    }
    Ok(snap)
}

pub fn parse_field_map(text: &str, path: &Path) -> Result<(String, FieldMap)> {
    let p = Parsed::new(text, path)?;
    let kind = p.get("kind")?.1.to_string();
    let (n, src) = p.get("source")?;
    let source: Source = src.parse().map_err(|e: String| p.err(n, e))?;
    let mesh = p.mesh()?;
    let columns = p.columns()?;
    if columns.len() < 2 || columns[0] != "x" || columns[1] != "y" {
        return Err(p.err(p.get("columns")?.0, "field maps start with columns x y"));
    }
    let rows = p.mesh_rows(&mesh, columns.len())?;
    let mut map = FieldMap::new(p.parse("time")?, source, mesh);
    for (c, name) in columns.iter().enumerate().skip(2) {
        map.push(name, rows.iter().map(|r| r[c]).collect());
    }
    Ok((kind, map))
}

pub fn parse_trajectories(text: &str, path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let p = Parsed::new(text, path)?;
    p.expect_kind("trajectories")?;
    let mut out = Vec::with_capacity(p.rows.len());
    for (n, fields) in &p.rows {
        if fields.len() != TRAJECTORY_COLUMNS.len() {
            return Err(p.err(
                *n,
                format!("expected {} columns, found {}", TRAJECTORY_COLUMNS.len(), fields.len()),
            ));
        }
        let num = |i: usize| p.number(*n, fields[i]);
        let id = fields[1]
            .parse()
            .map_err(|_| p.err(*n, format!("bad id {:?}", fields[1])))?;
        out.push(TrajectoryRecord {
            time: num(0)?,
            id,
            position: [num(2)?, num(3)?],
            velocity: [f64::NAN, f64::NAN],
            rho: num(4)?,
            action: num(5)?,
            q: num(6)?,
            lq: num(7)?,
        });
    }
    Ok(out)
}

/// Header values of a table plus its rows.
pub fn parse_table(text: &str, path: &Path) -> Result<(BTreeMap<String, String>, Vec<String>, Vec<Vec<f64>>)> {
    let p = Parsed::new(text, path)?;
    let columns = p.columns()?;
    let mut rows = Vec::with_capacity(p.rows.len());
    for (n, fields) in &p.rows {
        if fields.len() != columns.len() {
            return Err(p.err(
                *n,
                format!("expected {} columns, found {}", columns.len(), fields.len()),
            ));
        }
        rows.push(fields.iter().map(|s| p.number(*n, s)).collect::<Result<Vec<_>>>()?);
    }
    let header = p.header.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect();
    Ok((header, columns, rows))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<FieldSnapshot> {
    parse_snapshot(&read_text(path)?, path)
}

pub fn read_field_map(path: &Path) -> Result<(String, FieldMap)> {
    parse_field_map(&read_text(path)?, path)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    parse_trajectories(&read_text(path)?, path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub role: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub sha256: String,
}

/// What a command wrote, in order, with checksums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub run_id: String,
    pub command: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<toml::Table>,
    #[serde(default)]
    pub files: Vec<ManifestEntry>,
}

impl OutputManifest {
    pub fn files_with_role<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a ManifestEntry> {
        self.files.iter().filter(move |f| f.role == role)
    }
}

/// Writes files under one directory and records them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: OutputManifest,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: OutputManifest {
                run_id: String::new(),
                command: command.to_string(),
                status: "ok".into(),
                notes: Vec::new(),
                config: None,
                files: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) {
        self.manifest.config = toml::Table::try_from(config).ok();
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn write(&mut self, name: &str, role: &str, time: Option<f64>, contents: &str) -> Result<PathBuf> {
        if self.manifest.files.iter().any(|f| f.path == name) {
            return Err(Error::Config(format!("output file {name} written twice")));
        }
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.manifest.files.push(ManifestEntry {
            path: name.to_string(),
            role: role.to_string(),
            time,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    /// Writes the manifest (always last). `failure` marks a partial run.
    pub fn finish(mut self, failure: Option<&Error>) -> Result<OutputManifest> {
        if let Some(e) = failure {
            self.manifest.status = format!("failed: {e}");
        }
        let mut id = Sha256::new();
        id.update(self.manifest.command.as_bytes());
        if let Some(cfg) = &self.manifest.config {
            id.update(cfg.to_string().as_bytes());
        }
        for f in &self.manifest.files {
            id.update(f.sha256.as_bytes());
        }
        self.manifest.run_id = sha256_hex(&id.finalize())[..16].to_string();
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<OutputManifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = read_text(&path)?;
    toml::from_str(&text).map_err(|e| format_error(&path, 0, e.to_string()))
}

/// Files whose checksum differs from the manifest (or that are missing).
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(dir)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        match std::fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_snapshot() -> FieldSnapshot {
        let mesh = Mesh {
            origin: [-0.7, -0.31],
            spacing: [0.1 / 3.0, 0.2],
            nx: 7,
            ny: 4,
        };
        let mut s = FieldSnapshot::empty(12.5, Source::Qtm, mesh);
        for k in 0..mesh.len() {
            let [x, y] = mesh.point_at(k);
            s.rho[k] = (-x * x - 3.0 * y * y).exp() / 7.0;
            if k % 5 != 0 {
                s.vx[k] = x.sin() * 1e-3;
                s.vy[k] = -y / 3.0;
                s.s[k] = -0.0;
            }
        }
        s.metadata.insert("renormalization".into(), 1.0 / 3.0);
        s
    }

    fn same_bits(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let s = sample_snapshot();
        let text = snapshot_to_string(&s);
        let back = parse_snapshot(&text, Path::new("mem")).unwrap();
        assert_eq!(back.time.to_bits(), s.time.to_bits());
        assert_eq!(back.mesh, s.mesh);
        assert_eq!(back.metadata, s.metadata);
        assert!(
            same_bits(&back.rho, &s.rho)
                && same_bits(&back.vx, &s.vx)
                && same_bits(&back.vy, &s.vy)
                && same_bits(&back.s, &s.s)
        );
        // Writing again gives the same bytes.
        assert_eq!(snapshot_to_string(&back), text);
        let first = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(first.split_whitespace().count(), 6);
    }

    #[test]
    fn malformed_snapshot_reports_the_line() {
        let text = snapshot_to_string(&sample_snapshot());
        let mut lines: Vec<&str> = text.lines().collect();
        let row = lines.iter().position(|l| !l.starts_with('#')).unwrap() + 3;
        lines[row] = "0 0 1 2";
        let err = parse_snapshot(&lines.join("\n"), Path::new("bad.dat")).unwrap_err();
        assert!(matches!(err, Error::Format { line, .. } if line == row + 1), "{err}");
        assert_eq!(err.exit_code(), 4);
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(parse_snapshot(&truncated, Path::new("t.dat")).is_err());
        let garbled = text.replacen("kind: snapshot", "kind: trajectories", 1);
        assert!(parse_snapshot(&garbled, Path::new("g.dat")).is_err());
    }

    #[test]
    fn trajectories_are_sorted_and_round_trip() {
        let rec = |t: f64, id: u64| TrajectoryRecord {
            time: t,
            id,
            position: [t * 0.1, -(id as f64)],
            velocity: [0.0, 0.0],
            rho: 0.25,
            action: 1e-3 * t,
            q: 2e-4,
            lq: -1e-5,
        };
        let records = vec![rec(2.0, 7), rec(0.0, 9), rec(0.0, 3), rec(2.0, 1)];
        let text = trajectories_to_string(&records, 4);
        let back = parse_trajectories(&text, Path::new("mem")).unwrap();
        let keys: Vec<(f64, u64)> = back.iter().map(|r| (r.time, r.id)).collect();
        assert_eq!(keys, vec![(0.0, 3), (0.0, 9), (2.0, 1), (2.0, 7)]);
        assert_eq!(back[3].action, records[0].action);
    }

    #[test]
    fn field_map_documents_and_round_trips_columns() {
        let s = sample_snapshot();
        let mut map = FieldMap::new(s.time, s.source, s.mesh);
        map.push("P", s.rho.iter().map(|r| r * 3.0).collect());
        map.push("div_j", s.vx.clone());
        let text = field_map_to_string(&map, "divergence");
        assert!(text.contains("# column P: quantum pressure"));
        let (kind, back) = parse_field_map(&text, Path::new("mem")).unwrap();
        assert_eq!(kind, "divergence");
        assert!(same_bits(back.column("P").unwrap(), map.column("P").unwrap()));
        assert!(same_bits(back.column("div_j").unwrap(), &s.vx));
    }

    #[test]
    fn manifest_is_written_last_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "test").unwrap();
        out.write("a/one.dat", "snapshot", Some(0.0), "1\n").unwrap();
        out.write("two.dat", "table", None, "2\n").unwrap();
        assert!(out.write("two.dat", "table", None, "again").is_err());
        assert!(!dir.path().join(MANIFEST_NAME).exists());
        let m = out.finish(None).unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("two.dat"), "changed").unwrap();
        assert_eq!(verify_manifest(dir.path()).unwrap(), vec!["two.dat".to_string()]);
    }

    proptest! {
        #[test]
        fn floats_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            let s = fmt_f64(x);
            let y: f64 = s.parse().unwrap();
            prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()), "{s}");
        }
    }
}
