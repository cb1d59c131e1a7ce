//! Artifact persistence: the `DGFG` flat binary layout for matrices and
//! fields, CSV sample laws, JSON sidecars with provenance, and the
//! limit-law parameter bundle.
//!
//! Value files are byte-deterministic functions of their inputs; wall-clock
//! provenance lives only in run manifests (see `cli`).

use crate::error::DgffError;
use crate::extremes::{ArgmaxSmoothed, EmpiricalLaw, LawMeta};
use crate::field::{FieldSample, Grid, ModelTag};
use crate::lattice::BoxSpec;
use crate::limitlaw::{CoarseGrid, LimitLawParams};
use crate::Result;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"DGFG";
const VERSION: u32 = 1;

/// FNV-1a over the payload bytes; recorded in sidecars.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_side: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_origin: Option<(i64, i64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub crate_version: String,
    pub value_hash: String,
}

fn crate_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| DgffError::Format(format!("sidecar encode: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write a row-major matrix in the DGFG layout plus its JSON sidecar.
pub fn write_matrix_dgfg(
    path: &Path,
    rows: usize,
    cols: usize,
    data: &[f64],
    kind: &str,
    box_spec: Option<BoxSpec>,
    model_tag: Option<ModelTag>,
    seed: Option<u64>,
) -> Result<()> {
    if data.len() != rows * cols {
        return Err(DgffError::Format(format!(
            "matrix payload {} != {rows} x {cols}",
            data.len()
        )));
    }
    let mut payload = Vec::with_capacity(4 + 4 + 16 + 8 * data.len());
    payload.extend_from_slice(MAGIC);
    payload.extend_from_slice(&VERSION.to_le_bytes());
    payload.extend_from_slice(&(rows as u64).to_le_bytes());
    payload.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&payload)?;
    write_sidecar(
        path,
        &Sidecar {
            schema: "dgff-sidecar/1".into(),
            kind: kind.into(),
            box_side: box_spec.map(|b| b.side()),
            box_origin: box_spec.map(|b| b.origin()),
            model_tag: model_tag.map(|m| m.as_str().to_string()),
            seed,
            crate_version: crate_version(),
            value_hash: format!("{:016x}", fnv64(&payload)),
        },
    )
}

/// Read a DGFG matrix: `(rows, cols, data, sidecar)`.
pub fn read_matrix_dgfg(path: &Path) -> Result<(usize, usize, Vec<f64>, Sidecar)> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[0..4] != MAGIC {
        return Err(DgffError::Format("missing DGFG magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(DgffError::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let want = 24 + 8 * rows * cols;
    if bytes.len() != want {
        return Err(DgffError::Format(format!(
            "payload length {} != expected {want}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let sidecar_file = sidecar_path(path);
    let sidecar: Sidecar = if sidecar_file.exists() {
        serde_json::from_str(&std::fs::read_to_string(sidecar_file)?)
            .map_err(|e| DgffError::Format(format!("sidecar decode: {e}")))?
    } else {
        return Err(DgffError::Format(format!(
            "missing sidecar {}",
            sidecar_file.display()
        )));
    };
    Ok((rows, cols, data, sidecar))
}

/// Persist a field sample (grid in DGFG, model/seed in the sidecar).
pub fn write_field(path: &Path, field: &FieldSample) -> Result<()> {
    let n = field.values.side();
    write_matrix_dgfg(
        path,
        n,
        n,
        field.values.as_slice(),
        "field",
        Some(field.box_spec),
        Some(field.model),
        Some(field.seed),
    )
}

pub fn read_field(path: &Path) -> Result<FieldSample> {
    let (rows, cols, data, sidecar) = read_matrix_dgfg(path)?;
    if rows != cols {
        return Err(DgffError::Format("field grid must be square".into()));
    }
    let side = sidecar
        .box_side
        .ok_or_else(|| DgffError::Format("sidecar missing field `box_side`".into()))?;
    if side != rows {
        return Err(DgffError::Format(format!(
            "sidecar side {side} != payload side {rows}"
        )));
    }
    let model = sidecar
        .model_tag
        .as_deref()
        .and_then(ModelTag::parse)
        .ok_or_else(|| DgffError::Format("sidecar missing field `model_tag`".into()))?;
    let box_spec = if side.is_power_of_two() {
        BoxSpec::new(side)?
    } else {
        BoxSpec::any_side(side)?
    };
    Ok(FieldSample {
        box_spec,
        values: Grid::from_vec(side, data),
        model,
        seed: sidecar
            .seed
            .ok_or_else(|| DgffError::Format("sidecar missing field `seed`".into()))?,
    })
}

/// Plot-ready CSV export of a field: `x,y,value`.
pub fn write_field_csv(path: &Path, field: &FieldSample) -> Result<()> {
    let n = field.values.side();
    let mut out = String::with_capacity(n * n * 12);
    out.push_str("x,y,value\n");
    for y in 0..n {
        for x in 0..n {
            out.push_str(&format!("{x},{y},{}\n", field.values.get(x, y)));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Empirical laws
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LawSidecar {
    schema: String,
    model: String,
    n_side: Option<usize>,
    master_seed: u64,
    reps: usize,
    sample_count: usize,
    /// Conventions of the recorded numbers.
    units: LawUnits,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LawUnits {
    centering: String,
    variance: String,
}

fn law_units() -> LawUnits {
    LawUnits {
        centering: "m_N = 2 sqrt(2/pi) (ln N - (3/8) ln ln N), natural logarithms".into(),
        variance: "conditional variance 1; covariance (I - P)^{-1}".into(),
    }
}

/// One sample per line, full round-trip precision, plus a JSON sidecar.
pub fn write_law(path: &Path, law: &EmpiricalLaw) -> Result<()> {
    let mut out = String::with_capacity(law.len() * 20);
    for v in law.samples() {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out)?;
    let sidecar = LawSidecar {
        schema: "dgff-law/1".into(),
        model: law.meta.model.clone(),
        n_side: law.meta.n_side,
        master_seed: law.meta.master_seed,
        reps: law.meta.reps,
        sample_count: law.len(),
        units: law_units(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| DgffError::Format(format!("law sidecar encode: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Load a law, rejecting missing sidecars, schema violations, and
/// sample-count mismatches.
pub fn load_law(path: &Path) -> Result<EmpiricalLaw> {
    let sidecar_file = sidecar_path(path);
    if !sidecar_file.exists() {
        return Err(DgffError::Format(format!(
            "law file {} has no JSON sidecar (expected {})",
            path.display(),
            sidecar_file.display()
        )));
    }
    let sidecar: LawSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar_file)?)
        .map_err(|e| DgffError::Format(format!("law sidecar: {e}")))?;
    if sidecar.schema != "dgff-law/1" {
        return Err(DgffError::Format(format!(
            "unknown law schema `{}`",
            sidecar.schema
        )));
    }
    let body = std::fs::read_to_string(path)?;
    let mut samples = Vec::with_capacity(sidecar.sample_count);
    for (lineno, line) in body.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            DgffError::Format(format!("unparseable sample on line {}", lineno + 1))
        })?;
        samples.push(v);
    }
    if samples.len() != sidecar.sample_count {
        return Err(DgffError::Format(format!(
            "sample count {} != sidecar count {}",
            samples.len(),
            sidecar.sample_count
        )));
    }
    EmpiricalLaw::from_samples(
        samples,
        LawMeta {
            model: sidecar.model,
            n_side: sidecar.n_side,
            master_seed: sidecar.master_seed,
            reps: sidecar.reps,
        },
    )
}

/// Argmax locations `v*/N`, one `x,y` pair per line.
pub fn write_argmax(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::with_capacity(points.len() * 24);
    out.push_str("x,y\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_argmax(path: &Path) -> Result<Vec<(f64, f64)>> {
    let body = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.parse().ok()).ok_or_else(|| {
                DgffError::Format(format!("bad argmax row on line {}", lineno + 1))
            })
        };
        out.push((parse(parts.next())?, parse(parts.next())?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Limit-law parameters
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamsFile {
    schema: String,
    k: usize,
    delta: f64,
    g_k: f64,
    alpha_star: f64,
    psi_dim: usize,
    psi_density: Vec<f64>,
    coarse_per_cell: usize,
    coarse_sites: Vec<(f64, f64)>,
    coarse_snap_radius: f64,
    coarse_n_ref: usize,
    coarse_refinement_error: f64,
    /// DGFG file holding the covariance matrix, relative to the JSON file.
    coarse_cov_file: String,
}

/// Write `params.json` plus the covariance matrix as a DGFG binary next to
/// it.
pub fn write_params(dir: &Path, params: &LimitLawParams) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let cov_name = "coarse_cov.dgfg";
    let cov = &params.coarse.cov;
    let data: Vec<f64> = (0..cov.nrows())
        .flat_map(|i| (0..cov.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| cov[(i, j)])
        .collect();
    write_matrix_dgfg(
        &dir.join(cov_name),
        cov.nrows(),
        cov.ncols(),
        &data,
        "coarse-covariance",
        None,
        None,
        None,
    )?;
    let file = ParamsFile {
        schema: "dgff-params/1".into(),
        k: params.k,
        delta: params.delta,
        g_k: params.g_k,
        alpha_star: params.alpha_star,
        psi_dim: params.psi.dim,
        psi_density: params.psi.density.clone(),
        coarse_per_cell: params.coarse.per_cell,
        coarse_sites: params.coarse.sites.clone(),
        coarse_snap_radius: params.coarse.snap_radius,
        coarse_n_ref: params.coarse.n_ref,
        coarse_refinement_error: params.coarse.refinement_error,
        coarse_cov_file: cov_name.into(),
    };
    let path = dir.join("params.json");
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| DgffError::Format(format!("params encode: {e}")))?;
    std::fs::write(&path, json)?;
    Ok(path)
}

pub fn load_params(path: &Path) -> Result<LimitLawParams> {
    let file: ParamsFile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| DgffError::Format(format!("params decode: {e}")))?;
    if file.schema != "dgff-params/1" {
        return Err(DgffError::Format(format!(
            "unknown params schema `{}`",
            file.schema
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let (rows, cols, data, _) = read_matrix_dgfg(&dir.join(&file.coarse_cov_file))?;
    let mut cov = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            cov[(i, j)] = data[i * cols + j];
        }
    }
    Ok(LimitLawParams {
        k: file.k,
        delta: file.delta,
        g_k: file.g_k,
        alpha_star: file.alpha_star,
        psi: ArgmaxSmoothed {
            dim: file.psi_dim,
            density: file.psi_density,
        },
        coarse: CoarseGrid {
            per_cell: file.coarse_per_cell,
            sites: file.coarse_sites,
            cov,
            snap_radius: file.coarse_snap_radius,
            n_ref: file.coarse_n_ref,
            refinement_error: file.coarse_refinement_error,
        },
    })
}

/// Pretty-printed JSON report.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| DgffError::Format(format!("report encode: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn law_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("law.csv");
        let law = EmpiricalLaw::from_samples(
            vec![0.5, -1.25, 3.75e-3, 2.0],
            LawMeta {
                model: "GFF".into(),
                n_side: Some(64),
                master_seed: 9,
                reps: 4,
            },
        )
        .unwrap();
        write_law(&path, &law).unwrap();
        let loaded = load_law(&path).unwrap();
        assert_eq!(loaded.samples(), law.samples());
        assert_eq!(loaded.meta, law.meta);
    }

    #[test]
    fn law_errors_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("law.csv");
        std::fs::write(&path, "0.5\n1.5\n").unwrap();
        // no sidecar
        match load_law(&path) {
            Err(DgffError::Format(msg)) => assert!(msg.contains("sidecar"), "{msg}"),
            other => panic!("{other:?}"),
        }
        // sidecar missing a required field
        std::fs::write(
            sidecar_path(&path),
            r#"{"schema":"dgff-law/1","model":"GFF","n_side":64,"master_seed":1,"reps":2}"#,
        )
        .unwrap();
        match load_law(&path) {
            Err(DgffError::Format(msg)) => {
                assert!(msg.contains("sample_count"), "{msg}")
            }
            other => panic!("{other:?}"),
        }
        // count mismatch
        std::fs::write(
            sidecar_path(&path),
            serde_json::to_string(&LawSidecar {
                schema: "dgff-law/1".into(),
                model: "GFF".into(),
                n_side: Some(64),
                master_seed: 1,
                reps: 3,
                sample_count: 3,
                units: law_units(),
            })
            .unwrap(),
        )
        .unwrap();
        match load_law(&path) {
            Err(DgffError::Format(msg)) => assert!(msg.contains("count"), "{msg}"),
            other => panic!("{other:?}"),
        }
        // truncated / unparseable body
        std::fs::write(&path, "0.5\nnot-a-number\n").unwrap();
        assert!(matches!(load_law(&path), Err(DgffError::Format(_))));
    }

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dgfg");
        let field = crate::sampler::sample_gff_spectral(BoxSpec::new(8).unwrap(), 3).unwrap();
        write_field(&path, &field).unwrap();
        let loaded = read_field(&path).unwrap();
        assert_eq!(loaded.values.as_slice(), field.values.as_slice());
        assert_eq!(loaded.model, ModelTag::Gff);
        assert_eq!(loaded.seed, 3);
    }

    #[test]
    fn dgfg_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dgfg");
        write_matrix_dgfg(&path, 2, 2, &[1.0, 2.0, 3.0, 4.0], "test", None, None, None)
            .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_matrix_dgfg(&path), Err(DgffError::Format(_))));
    }

    proptest! {
        #[test]
        fn law_csv_round_trips_exactly(samples in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("law.csv");
            let law = EmpiricalLaw::from_samples(samples, LawMeta {
                model: "GFF".into(),
                n_side: None,
                master_seed: 0,
                reps: 0,
            }).unwrap();
            write_law(&path, &law).unwrap();
            let loaded = load_law(&path).unwrap();
            prop_assert_eq!(loaded.samples(), law.samples());
        }

        #[test]
        fn dgfg_round_trips_exactly(data in proptest::collection::vec(-1e12f64..1e12, 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.dgfg");
            let rows = data.len();
            write_matrix_dgfg(&path, rows, 1, &data, "test", None, None, None).unwrap();
            let (r, c, loaded, _) = read_matrix_dgfg(&path).unwrap();
            prop_assert_eq!((r, c), (rows, 1));
            prop_assert_eq!(loaded, data);
        }
    }
}
