//! File formats.
//!
//! Snapshot matrix, CSV: a header line `N,cols,dt,t0,width,height`, a line with
//! those values, then `N` lines of `cols` comma-separated values. Row `i` is grid
//! point `i`, column `j` is snapshot `j` (time `t0 + j dt`). `width`/`height` are 0
//! when the grid shape is unknown.
//!
//! Snapshot matrix, binary (all fields little-endian):
//!
//! ```text
//! b"HSNP"  u32 version=1
//! u64 N   u64 cols   f64 dt   f64 t0   u64 width   u64 height
//! N*cols f64, column-major (snapshot 0 first)
//! ```
//!
//! Checkpoint container (little-endian):
//!
//! ```text
//! b"HSMD"  u32 version=1
//! u64 len  <len bytes of JSON metadata>
//! u32 count, then per matrix: u32 name_len, name (UTF-8), one binary snapshot block
//! ```
//!
//! Complex matrices are stored as `name.re` / `name.im` pairs; complex vectors as
//! `r x 2` matrices of (re, im).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dmd::{DmdModel, RankPolicy, TruncatedSvd, ORDERING_CONVENTION};
use crate::error::{Error, Result};
use crate::field::{SnapshotSeries, Workspace};
use crate::online::{AmplitudeAnchor, GeneralOnlineState, LongTermOnlineState};
use crate::placement::Placement;

const SNAPSHOT_MAGIC: &[u8; 4] = b"HSNP";
const CONTAINER_MAGIC: &[u8; 4] = b"HSMD";
const FORMAT_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A columns-as-snapshots matrix plus its time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    pub values: Mat<f64>,
    pub dt: f64,
    pub t0: f64,
    /// Grid `(width, height)` when known.
    pub shape: Option<(usize, usize)>,
}

impl SnapshotMatrix {
    pub fn new(values: Mat<f64>, dt: f64) -> Self {
        Self { values, dt, t0: 0.0, shape: None }
    }

    pub fn from_series(s: &SnapshotSeries, ws: Option<&Workspace>) -> Self {
        Self {
            values: s.to_matrix(),
            dt: s.dt(),
            t0: s.get(0).map_or(0.0, |f| f.time),
            shape: ws.map(|w| (w.width(), w.height())),
        }
    }

    pub fn to_series(&self) -> Result<SnapshotSeries> {
        SnapshotSeries::from_matrix(self.values.as_ref(), self.dt, self.t0)
    }

    pub fn workspace(&self) -> Result<Option<Workspace>> {
        self.shape.map(|(w, h)| Workspace::grid(w, h)).transpose()
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Format(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(Error::Format("t0 is not finite".into()));
        }
        if let Some((w, h)) = self.shape {
            if w * h != self.values.nrows() {
                return Err(Error::Format(format!("grid {w}x{h} does not match N = {}", self.values.nrows())));
            }
        }
        Ok(())
    }
}

pub fn write_snapshot_csv<W: Write>(mut w: W, m: &SnapshotMatrix) -> Result<()> {
    m.check()?;
    let (sw, sh) = m.shape.unwrap_or((0, 0));
    writeln!(w, "N,cols,dt,t0,width,height")?;
    writeln!(w, "{},{},{:?},{:?},{sw},{sh}", m.values.nrows(), m.values.ncols(), m.dt, m.t0)?;
    let mut line = String::new();
    for i in 0..m.values.nrows() {
        line.clear();
        for j in 0..m.values.ncols() {
            if j > 0 {
                line.push(',');
            }
            // `{:?}` is the shortest representation that parses back exactly.
            line.push_str(&format!("{:?}", m.values[(i, j)]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("cannot parse {what} from {s:?}")))
}

pub fn read_snapshot_csv<R: BufRead>(r: R) -> Result<SnapshotMatrix> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines.next().transpose()?.ok_or_else(|| Error::Format(format!("missing {what}")))
    };
    let names = next("header")?;
    if names.trim() != "N,cols,dt,t0,width,height" {
        return Err(Error::Format(format!("unexpected header {names:?}")));
    }
    let head = next("header values")?;
    let f: Vec<&str> = head.split(',').collect();
    if f.len() != 6 {
        return Err(Error::Format(format!("header has {} fields, expected 6", f.len())));
    }
    let n: usize = parse_field(f[0], "N")?;
    let cols: usize = parse_field(f[1], "cols")?;
    let dt: f64 = parse_field(f[2], "dt")?;
    let t0: f64 = parse_field(f[3], "t0")?;
    let sw: usize = parse_field(f[4], "width")?;
    let sh: usize = parse_field(f[5], "height")?;
    let mut values = Mat::<f64>::zeros(n, cols);
    for i in 0..n {
        let row = next("data row")?;
        let mut count = 0;
        for (j, v) in row.split(',').enumerate() {
            if j >= cols {
                return Err(Error::Format(format!("row {i} has more than {cols} values")));
            }
            values[(i, j)] = parse_field(v, "value")?;
            count += 1;
        }
        if count != cols {
            return Err(Error::Format(format!("row {i} has {count} values, expected {cols}")));
        }
    }
    let m = SnapshotMatrix { values, dt, t0, shape: (sw > 0 || sh > 0).then_some((sw, sh)) };
    m.check()?;
    Ok(m)
}

pub fn write_snapshot_binary<W: Write>(mut w: W, m: &SnapshotMatrix) -> Result<()> {
    m.check()?;
    let (sw, sh) = m.shape.unwrap_or((0, 0));
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [m.values.nrows() as u64, m.values.ncols() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&m.dt.to_le_bytes())?;
    w.write_all(&m.t0.to_le_bytes())?;
    for v in [sw as u64, sh as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for j in 0..m.values.ncols() {
        for v in m.values.col(j).iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = read_u64(r)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} too large")))
}

pub fn read_snapshot_binary<R: Read>(mut r: R) -> Result<SnapshotMatrix> {
    if &read_array::<4, _>(&mut r)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a binary snapshot matrix (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot format version {version}")));
    }
    let n = read_len(&mut r, "N")?;
    let cols = read_len(&mut r, "column count")?;
    let dt = read_f64(&mut r)?;
    let t0 = read_f64(&mut r)?;
    let sw = read_len(&mut r, "width")?;
    let sh = read_len(&mut r, "height")?;
    let total = n.checked_mul(cols).ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut data = Vec::with_capacity(total.min(1 << 24));
    for _ in 0..total {
        data.push(read_f64(&mut r)?);
    }
    let values = MatRef::from_column_major_slice(&data, n, cols).to_owned();
    let m = SnapshotMatrix { values, dt, t0, shape: (sw > 0 || sh > 0).then_some((sw, sh)) };
    m.check()?;
    Ok(m)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes CSV for a `.csv` extension, binary otherwise.
pub fn save_snapshots(path: &Path, m: &SnapshotMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_snapshot_csv(&mut w, m)?;
    } else {
        write_snapshot_binary(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_snapshots(path: &Path) -> Result<SnapshotMatrix> {
    let r = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_snapshot_csv(r)
    } else {
        read_snapshot_binary(r)
    }
}

/// Something that can be stopped and resumed: a fitted model or an online state.
#[derive(Clone, Debug)]
pub enum Checkpoint {
    Model(DmdModel),
    General(GeneralOnlineState),
    LongTerm(LongTermOnlineState),
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Model(_) => "dmd_model",
            Checkpoint::General(_) => "general_state",
            Checkpoint::LongTerm(_) => "longterm_state",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    kind: String,
    library_version: String,
    #[serde(default)]
    meta: Value,
}

struct Blocks {
    items: Vec<(String, Mat<f64>)>,
    dt: f64,
}

impl Blocks {
    fn push(&mut self, name: &str, m: Mat<f64>) {
        self.items.push((name.to_string(), m));
    }

    fn push_vec(&mut self, name: &str, v: &[f64]) {
        self.push(name, Mat::from_fn(v.len(), 1, |i, _| v[i]));
    }

    fn push_complex(&mut self, name: &str, m: MatRef<'_, c64>) {
        self.push(&format!("{name}.re"), Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re));
        self.push(&format!("{name}.im"), Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].im));
    }

    fn push_complex_vec(&mut self, name: &str, v: &[c64]) {
        self.push(name, Mat::from_fn(v.len(), 2, |i, j| if j == 0 { v[i].re } else { v[i].im }));
    }

    fn push_svd(&mut self, s: &TruncatedSvd) {
        self.push("svd.u", s.u.clone());
        self.push_vec("svd.sigma", &s.sigma);
        self.push("svd.w", s.w.clone());
    }

    fn take(&mut self, name: &str) -> Result<Mat<f64>> {
        let k = self
            .items
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("container is missing matrix {name:?}")))?;
        Ok(self.items.swap_remove(k).1)
    }

    fn has(&self, name: &str) -> bool {
        self.items.iter().any(|(n, _)| n == name)
    }

    fn take_vec(&mut self, name: &str) -> Result<Vec<f64>> {
        let m = self.take(name)?;
        if m.ncols() != 1 {
            return Err(Error::Format(format!("{name:?} should be a column vector")));
        }
        Ok(m.col(0).iter().copied().collect())
    }

    fn take_complex(&mut self, name: &str) -> Result<Mat<c64>> {
        let re = self.take(&format!("{name}.re"))?;
        let im = self.take(&format!("{name}.im"))?;
        if re.shape() != im.shape() {
            return Err(Error::Format(format!("real and imaginary parts of {name:?} differ in shape")));
        }
        Ok(Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)])))
    }

    fn take_complex_vec(&mut self, name: &str) -> Result<Vec<c64>> {
        let m = self.take(name)?;
        if m.ncols() != 2 {
            return Err(Error::Format(format!("{name:?} should have two columns (re, im)")));
        }
        Ok((0..m.nrows()).map(|i| c64::new(m[(i, 0)], m[(i, 1)])).collect())
    }

    fn take_svd(&mut self) -> Result<TruncatedSvd> {
        let u = self.take("svd.u")?;
        let sigma = self.take_vec("svd.sigma")?;
        let w = self.take("svd.w")?;
        if u.ncols() != sigma.len() || w.ncols() != sigma.len() {
            return Err(Error::Format("inconsistent SVD factor shapes".into()));
        }
        Ok(TruncatedSvd { u, sigma, w })
    }
}

fn meta_field<T: for<'de> Deserialize<'de>>(meta: &Value, key: &str) -> Result<T> {
    let v = meta.get(key).ok_or_else(|| Error::Format(format!("metadata is missing {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("metadata field {key:?}: {e}")))
}

fn encode(cp: &Checkpoint) -> (Value, Blocks) {
    match cp {
        Checkpoint::Model(m) => {
            let mut b = Blocks { items: Vec::new(), dt: m.dt };
            b.push_complex("modes", m.modes.as_ref());
            b.push_complex_vec("eigenvalues", &m.eigenvalues);
            b.push_complex_vec("amplitudes", &m.amplitudes);
            if let Some(s) = &m.svd {
                b.push_svd(s);
            }
            let meta = json!({
                "rank": m.rank(),
                "n_points": m.n_points(),
                "dt": m.dt,
                "anchor": m.anchor,
                "span_residual": m.span_residual,
                "ordering": ORDERING_CONVENTION,
            });
            (meta, b)
        }
        Checkpoint::General(st) => {
            let mut b = Blocks { items: Vec::new(), dt: st.dt };
            b.push_svd(&st.svd);
            b.push("y_all", st.y_all().to_owned());
            b.push_vec("x_first", &st.x_first);
            let meta = json!({
                "rank": st.rank(),
                "n_points": st.n,
                "dt": st.dt,
                "policy": st.policy,
                "stride": st.stride,
                "anchor": st.anchor,
                "pairs_seen": st.pairs_seen,
                "updates": st.updates,
                "ordering": ORDERING_CONVENTION,
            });
            (meta, b)
        }
        Checkpoint::LongTerm(st) => {
            let mut b = Blocks { items: Vec::new(), dt: st.dt };
            b.push("a_op", st.a_op.clone());
            b.push("s_mat", st.s_mat.clone());
            b.push_vec("x_first", &st.x_first);
            b.push_vec("latest", &st.latest);
            let meta = json!({
                "rank": st.a_op.nrows(),
                "n_points": st.a_op.nrows(),
                "dt": st.dt,
                "gamma": st.gamma,
                "anchor": st.anchor,
                "pairs_seen": st.pairs_seen,
                "updates": st.updates,
                "ordering": ORDERING_CONVENTION,
            });
            (meta, b)
        }
    }
}

fn decode(kind: &str, meta: &Value, mut b: Blocks) -> Result<Checkpoint> {
    let dt: f64 = meta_field(meta, "dt")?;
    let n: usize = meta_field(meta, "n_points")?;
    let cp = match kind {
        "dmd_model" => {
            let modes = b.take_complex("modes")?;
            let eigenvalues = b.take_complex_vec("eigenvalues")?;
            let amplitudes = b.take_complex_vec("amplitudes")?;
            if modes.ncols() != eigenvalues.len() || amplitudes.len() != eigenvalues.len() || modes.nrows() != n {
                return Err(Error::Format("inconsistent model matrix shapes".into()));
            }
            let svd = if b.has("svd.u") { Some(b.take_svd()?) } else { None };
            Checkpoint::Model(DmdModel {
                modes,
                eigenvalues,
                amplitudes,
                svd,
                dt,
                anchor: meta_field(meta, "anchor")?,
                span_residual: meta_field(meta, "span_residual")?,
            })
        }
        "general_state" => {
            let svd = b.take_svd()?;
            let y = b.take("y_all")?;
            let x_first = b.take_vec("x_first")?;
            if svd.u.nrows() != n || y.nrows() != n || x_first.len() != n || y.ncols() != svd.w.nrows() {
                return Err(Error::Format("inconsistent general-state shapes".into()));
            }
            let stride: usize = meta_field(meta, "stride")?;
            if stride == 0 {
                return Err(Error::Format("stride must be at least 1".into()));
            }
            let mut y_all = Vec::with_capacity(y.nrows() * y.ncols());
            for j in 0..y.ncols() {
                y_all.extend(y.col(j).iter());
            }
            Checkpoint::General(GeneralOnlineState {
                svd,
                y_all,
                n,
                dt,
                policy: meta_field::<RankPolicy>(meta, "policy")?,
                stride,
                anchor: meta_field::<AmplitudeAnchor>(meta, "anchor")?,
                x_first,
                pairs_seen: meta_field(meta, "pairs_seen")?,
                updates: meta_field(meta, "updates")?,
            })
        }
        "longterm_state" => {
            let a_op = b.take("a_op")?;
            let s_mat = b.take("s_mat")?;
            let x_first = b.take_vec("x_first")?;
            let latest = b.take_vec("latest")?;
            if a_op.shape() != (n, n) || s_mat.shape() != (n, n) || x_first.len() != n || latest.len() != n {
                return Err(Error::Format("inconsistent long-term state shapes".into()));
            }
            let gamma: f64 = meta_field(meta, "gamma")?;
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Format(format!("forgetting factor {gamma} outside (0, 1]")));
            }
            Checkpoint::LongTerm(LongTermOnlineState {
                a_op,
                s_mat,
                gamma,
                dt,
                anchor: meta_field(meta, "anchor")?,
                x_first,
                latest,
                pairs_seen: meta_field(meta, "pairs_seen")?,
                updates: meta_field(meta, "updates")?,
            })
        }
        other => return Err(Error::Format(format!("unknown checkpoint kind {other:?}"))),
    };
    Ok(cp)
}

pub fn write_checkpoint<W: Write>(mut w: W, cp: &Checkpoint) -> Result<()> {
    let (meta, blocks) = encode(cp);
    let header = Header {
        format: "hetsense-checkpoint".into(),
        kind: cp.kind().into(),
        library_version: LIBRARY_VERSION.into(),
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(blocks.items.len() as u32).to_le_bytes())?;
    for (name, m) in &blocks.items {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_snapshot_binary(&mut w, &SnapshotMatrix::new(m.clone(), blocks.dt))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    if &read_array::<4, _>(&mut r)? != CONTAINER_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = read_len(&mut r, "metadata length")?;
    let mut json = Vec::new();
    (&mut r).take(len as u64).read_to_end(&mut json)?;
    if json.len() != len {
        return Err(Error::Format("file truncated".into()));
    }
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("metadata: {e}")))?;
    if header.format != "hetsense-checkpoint" {
        return Err(Error::Format(format!("unexpected container format {:?}", header.format)));
    }
    let count = read_u32(&mut r)?;
    let mut blocks = Blocks { items: Vec::new(), dt: 1.0 };
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("matrix name is not UTF-8".into()))?;
        let m = read_snapshot_binary(&mut r)?;
        blocks.items.push((name, m.values));
    }
    decode(&header.kind, &header.meta, blocks)
}

pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, cp)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

pub const PLACEMENT_CSV_HEADER: &str = "region,center_index,center_x,center_y,radius,weight,member_count";

/// One row per region; `center_x`/`center_y` are physical coordinates.
pub fn write_placement_csv<W: Write>(mut w: W, p: &Placement, ws: &Workspace) -> Result<()> {
    writeln!(w, "{PLACEMENT_CSV_HEADER}")?;
    for (k, (r, wt)) in p.regions.iter().zip(&p.weights).enumerate() {
        let (x, y) = ws.position(r.center);
        writeln!(w, "{k},{},{x:?},{y:?},{:?},{wt:?},{}", r.center, r.radius, r.members.len())?;
    }
    Ok(())
}

pub fn save_placement(path: &Path, p: &Placement, ws: &Workspace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_placement_csv(&mut w, p, ws)?;
    w.flush()?;
    Ok(())
}
