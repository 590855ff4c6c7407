//! CSV export of kernel sets and a binary cache of solved kernels.
//!
//! Kernel CSVs have a header `x,nu,e00,e01,…` (entries row-major, one line per node of the
//! triangle `x ≤ ν`, or of the full square for `L_bar`). Functions of one variable use
//! `x,e00,e01,…`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{
    solve_control_kernels, solve_coupling_terms, solve_observer_kernels, CouplingFunctions,
    KernelSetControl, KernelSetObserver, TriGrid,
};
use crate::model::PlantModel;
use crate::numerics::{GridKernel, Matrix, SampledFunction};

/// Every kernel and coupling function needed downstream, solved on one grid.
#[derive(Debug, Clone)]
pub struct KernelBundle {
    pub observer: KernelSetObserver,
    pub coupling: CouplingFunctions,
    pub control: KernelSetControl,
}

impl KernelBundle {
    pub fn solve(model: &PlantModel, grid: TriGrid) -> Result<Self> {
        let observer = solve_observer_kernels(model, grid)?;
        let coupling = solve_coupling_terms(model, &observer)?;
        let control = solve_control_kernels(model, &coupling, grid)?;
        Ok(Self {
            observer,
            coupling,
            control,
        })
    }

    /// As [`KernelBundle::solve`], reusing `<dir>/<hash>.bin` when present.
    pub fn solve_cached(model: &PlantModel, grid: TriGrid, dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Self::solve(model, grid);
        };
        let path = cache_path(dir, model, grid);
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(b) = decode(&bytes, model, grid) {
                return Ok(b);
            }
        }
        let bundle = Self::solve(model, grid)?;
        fs::create_dir_all(dir)?;
        // Unique per writer, so concurrent solves of the same key cannot interleave.
        static WRITERS: AtomicUsize = AtomicUsize::new(0);
        let tmp = path.with_extension(format!(
            "{}-{}.tmp",
            std::process::id(),
            WRITERS.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, encode(&bundle))?;
        fs::rename(tmp, &path)?;
        Ok(bundle)
    }
}

/// Hex SHA-256 of the canonical model JSON and the grid size.
pub fn cache_key(model: &PlantModel, grid: TriGrid) -> String {
    let mut h = Sha256::new();
    h.update(model.to_json_string().as_bytes());
    h.update(b"\0");
    h.update(grid.n().to_le_bytes());
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn cache_path(dir: &Path, model: &PlantModel, grid: TriGrid) -> PathBuf {
    dir.join(format!("{}.bin", cache_key(model, grid)))
}

const MAGIC: &[u8; 8] = b"HSKERN01";

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        self.f64s(m.as_slice());
    }
    fn function(&mut self, f: &SampledFunction) {
        self.u64(f.len());
        for v in f.values() {
            self.matrix(v);
        }
    }
    fn kernel(&mut self, k: &GridKernel) {
        self.u64(k.n());
        self.u64(k.shape().0);
        self.u64(k.shape().1);
        self.f64s(k.data());
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Invalid("truncated kernel cache".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Invalid("bad length".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let (r, c) = (self.u64()?, self.u64()?);
        let v = self.f64s()?;
        if v.len() != r * c {
            return Err(Error::Invalid("bad matrix in kernel cache".into()));
        }
        Ok(Matrix::from_column_slice(r, c, &v))
    }
    fn function(&mut self, grid: &[f64]) -> Result<SampledFunction> {
        let n = self.u64()?;
        let values = (0..n).map(|_| self.matrix()).collect::<Result<Vec<_>>>()?;
        SampledFunction::new(grid.to_vec(), values)
    }
    fn kernel(&mut self) -> Result<GridKernel> {
        let (n, r, c) = (self.u64()?, self.u64()?, self.u64()?);
        GridKernel::from_raw(n, r, c, self.f64s()?)
    }
}

fn encode(b: &KernelBundle) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    let o = &b.observer;
    w.u64(o.sweeps);
    w.f64s(&[o.residual]);
    w.kernel(&o.l);
    w.function(&o.gamma);
    w.function(&o.l1);
    w.function(&o.l2);
    let c = &b.coupling;
    for f in [&c.g1, &c.g2, &c.f_alpha, &c.f_beta] {
        w.function(f);
    }
    for m in [&c.g3, &c.g4, &c.gamma0] {
        w.matrix(m);
    }
    let k = &b.control;
    w.kernel(&k.l_check);
    w.function(&k.g_check);
    w.kernel(&k.l_bar);
    w.function(&k.g5);
    w.function(&k.f_alpha_bar);
    w.0
}

fn decode(bytes: &[u8], model: &PlantModel, grid: TriGrid) -> Result<KernelBundle> {
    let mut r = Reader(bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Invalid("not a kernel cache file".into()));
    }
    let pts = grid.points();
    let sweeps = r.u64()?;
    let residual = r.f64s()?.first().copied().unwrap_or(f64::NAN);
    let observer = KernelSetObserver {
        grid,
        n: model.n,
        m: model.m,
        l: r.kernel()?,
        gamma: r.function(&pts)?,
        l1: r.function(&pts)?,
        l2: r.function(&pts)?,
        sweeps,
        residual,
    };
    let (g1, g2, f_alpha, f_beta) = (
        r.function(&pts)?,
        r.function(&pts)?,
        r.function(&pts)?,
        r.function(&pts)?,
    );
    let coupling = CouplingFunctions {
        g1,
        g2,
        f_alpha,
        f_beta,
        g3: r.matrix()?,
        g4: r.matrix()?,
        gamma0: r.matrix()?,
    };
    let control = KernelSetControl {
        grid,
        n: model.n,
        l_check: r.kernel()?,
        g_check: r.function(&pts)?,
        l_bar: r.kernel()?,
        g5: r.function(&pts)?,
        f_alpha_bar: r.function(&pts)?,
    };
    if !r.0.is_empty() || observer.l.n() != grid.n() {
        return Err(Error::Invalid("kernel cache does not match the grid".into()));
    }
    Ok(KernelBundle {
        observer,
        coupling,
        control,
    })
}

fn header(prefix: &str, rows: usize, cols: usize) -> String {
    let mut h = prefix.to_string();
    for i in 0..rows {
        for j in 0..cols {
            let _ = write!(h, ",e{i}{j}");
        }
    }
    h
}

fn fmt_row(out: &mut String, lead: &[f64], entries: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in lead.iter().copied().chain(entries) {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

/// Writes `f` as `x,e00,…`.
pub fn write_function_csv(path: &Path, f: &SampledFunction) -> Result<()> {
    let (r, c) = f.shape();
    let mut s = header("x", r, c);
    s.push('\n');
    for (x, v) in f.grid().iter().zip(f.values()) {
        fmt_row(&mut s, &[*x], (0..r).flat_map(|i| (0..c).map(move |j| v[(i, j)])));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Writes the block `rows r0.., cols c0..` of a kernel as `x,nu,e00,…`, over the triangle
/// `x ≤ ν` or the full square.
#[allow(clippy::too_many_arguments)]
pub fn write_kernel_csv(
    path: &Path,
    k: &GridKernel,
    grid: &TriGrid,
    r0: usize,
    nr: usize,
    c0: usize,
    nc: usize,
    full_square: bool,
) -> Result<()> {
    let mut s = header("x,nu", nr, nc);
    s.push('\n');
    for a in 0..grid.n() {
        let start = if full_square { 0 } else { a };
        for b in start..grid.n() {
            fmt_row(
                &mut s,
                &[grid.x(a), grid.x(b)],
                (0..nr).flat_map(|i| (0..nc).map(move |j| k.entry(a, b, r0 + i, c0 + j))),
            );
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(s.as_bytes())?;
    Ok(())
}

/// Parsed CSV: header names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_csv(BufReader::new(text.as_bytes()))
}

fn parse_csv(r: impl BufRead) -> Result<CsvTable> {
    let mut lines = r.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Invalid("empty CSV".into()))??
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("CSV line {}: {e}", ln + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Invalid(format!(
                "CSV line {} has {} fields, header has {}",
                ln + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

/// Writes every observer and controller kernel block and coupling function into `dir`.
pub fn export_kernels(dir: &Path, b: &KernelBundle) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let o = &b.observer;
    let (n, m) = (o.n, o.m);
    let g = &o.grid;
    let mut written = Vec::new();
    for (name, r0, nr, c0, nc) in [
        ("L_aa", 0, n, 0, n),
        ("L_ab", 0, n, n, m),
        ("L_ba", n, m, 0, n),
        ("L_bb", n, m, n, m),
    ] {
        let p = dir.join(format!("{name}.csv"));
        write_kernel_csv(&p, &o.l, g, r0, nr, c0, nc, false)?;
        written.push(p);
    }
    let c = &b.coupling;
    let k = &b.control;
    for (name, f) in [
        ("gamma_alpha", &o.gamma_alpha()),
        ("gamma_beta", &o.gamma_beta()),
        ("L1", &o.l1),
        ("L2", &o.l2),
        ("G1", &c.g1),
        ("G2", &c.g2),
        ("F_alpha", &c.f_alpha),
        ("F_beta", &c.f_beta),
        ("G_check", &k.g_check),
        ("G5", &k.g5),
        ("F_alpha_bar", &k.f_alpha_bar),
    ] {
        let p = dir.join(format!("{name}.csv"));
        write_function_csv(&p, f)?;
        written.push(p);
    }
    let p = dir.join("L_check.csv");
    write_kernel_csv(&p, &k.l_check, g, 0, n, 0, n, false)?;
    written.push(p);
    let p = dir.join("L_bar.csv");
    write_kernel_csv(&p, &k.l_bar, g, 0, n, 0, n, true)?;
    written.push(p);
    Ok(written)
}
