//! Content-addressed cache of eigendecompositions.
//!
//! Keys hash the assembled matrix inputs exactly. An optional on-disk layer
//! lives under the directory named by `QPLAB_CACHE_DIR`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use qplab::dynamics::EvolutionData;
use qplab::lattice::LatticeBox;
use qplab::linalg::{c, CMat};
use qplab::ModelSpec;
use sha2::{Digest, Sha256};

pub const CACHE_DIR_ENV: &str = "QPLAB_CACHE_DIR";

/// SHA-256 of the model, the box and the exact bits of `θ`, as lowercase hex.
pub fn cache_key(model: &ModelSpec, bx: &LatticeBox, theta: f64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model).expect("model serializes"));
    h.update(b"|box|");
    for x in bx.center.twice() {
        h.update(x.to_le_bytes());
    }
    h.update(bx.radius.to_bits().to_le_bytes());
    h.update((bx.sites.len() as u64).to_le_bytes());
    h.update(b"|theta|");
    h.update(theta.to_bits().to_le_bytes());
    format!("{:x}", h.finalize())
}

pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn entry_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.eig"))
}

/// Eigenvalues then eigenvector entries `(re, im)` in column-major order, all little-endian `f64`.
pub fn store(dir: &Path, key: &str, values: &[f64], vectors: &CMat) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::with_capacity(8 + 8 * values.len() * (1 + 2 * values.len()));
    buf.extend((values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend(v.to_le_bytes());
    }
    for z in vectors.iter() {
        buf.extend(z.re.to_le_bytes());
        buf.extend(z.im.to_le_bytes());
    }
    let tmp = dir.join(format!("{key}.tmp-{}", std::process::id()));
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, entry_path(dir, key))
}

pub fn load(dir: &Path, key: &str, n: usize) -> Option<(Vec<f64>, CMat)> {
    let mut buf = Vec::new();
    fs::File::open(entry_path(dir, key)).ok()?.read_to_end(&mut buf).ok()?;
    let word = |i: usize| buf.get(8 * i..8 * i + 8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let len = u64::from_le_bytes(buf.get(0..8)?.try_into().ok()?) as usize;
    if len != n || buf.len() != 8 * (1 + n + 2 * n * n) {
        return None;
    }
    let values: Vec<f64> = (0..n).map(|i| word(1 + i)).collect::<Option<_>>()?;
    let mut vectors = CMat::zeros(n, n);
    for (k, z) in vectors.iter_mut().enumerate() {
        *z = c(word(1 + n + 2 * k)?, word(2 + n + 2 * k)?);
    }
    Some((values, vectors))
}

/// Rebuilds [`EvolutionData`] from cached factors, recomputing the defects.
pub fn evolution_from_parts(h: &CMat, sites: Vec<qplab::Site>, values: Vec<f64>, vectors: CMat) -> EvolutionData {
    let n = values.len();
    let unitarity_defect = qplab::linalg::identity_residual(&vectors.adjoint(), &vectors);
    let lam = CMat::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { c(0.0, 0.0) });
    let rebuilt = &vectors * lam * vectors.adjoint();
    let reconstruction_defect = qplab::linalg::max_abs(&(rebuilt - h)) / qplab::linalg::max_abs(h).max(1e-300);
    let initial = sites.iter().position(|s| s.norm() == 0).unwrap_or(0);
    EvolutionData {
        sites,
        eigenvalues: values,
        eigenvectors: vectors,
        initial,
        hermitian_defect: qplab::linalg::hermitian_defect(h),
        unitarity_defect,
        reconstruction_defect,
    }
}
