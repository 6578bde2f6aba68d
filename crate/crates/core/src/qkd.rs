//! Two-basis high-dimensional OAM protocol: basis construction, modal
//! decomposition at the receiver, crosstalk matrices, QBER and key rate.

use std::io::{BufRead, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid;
use crate::modes::{ang_coeffs, LgModeSpec};
use crate::scalar::{lit, wide, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Dimension `d = 2L + 1`.
    pub dimension: usize,
    /// Mode spacing `s`: the encoding set is `{−sL, …, 0, …, sL}`.
    pub spacing: i32,
    /// Highest radial index summed at the receiver.
    pub p_max: u32,
    /// Receiver aperture radius (m).
    pub aperture: f64,
    /// Transmitter waist `w0` (m).
    pub waist: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { dimension: 5, spacing: 1, p_max: 9, aperture: 0.15, waist: 0.03 }
    }
}

impl ProtocolConfig {
    pub fn l_max(&self) -> usize {
        (self.dimension - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 3 || self.dimension % 2 == 0 {
            return Err(Error::Config(format!("dimension must be odd and ≥ 3, got {}", self.dimension)));
        }
        if self.spacing < 1 {
            return Err(Error::Config(format!("mode spacing must be ≥ 1, got {}", self.spacing)));
        }
        if !(self.aperture > 0.0) || !(self.waist > 0.0) {
            return Err(Error::Config("aperture and waist must be positive".into()));
        }
        Ok(())
    }
}

/// The OAM encoding set and the angular (Fourier) basis over it.
#[derive(Clone, Debug)]
pub struct Mubs {
    pub oam: Vec<i32>,
    /// `ang[j][m]`: amplitude of `|l_m⟩` in the `j`-th angular state.
    pub ang: Vec<Vec<Complex<f64>>>,
}

pub fn build_mubs(cfg: &ProtocolConfig) -> Result<Mubs> {
    cfg.validate()?;
    let l = cfg.l_max() as i32;
    let oam = (-l..=l).map(|m| cfg.spacing * m).collect();
    let ang = (0..cfg.dimension).map(|j| ang_coeffs(j, cfg.l_max())).collect();
    Ok(Mubs { oam, ang })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "OAM")]
    Oam,
    #[serde(rename = "ANG")]
    Ang,
}

impl Basis {
    pub fn tag(self) -> &'static str {
        match self {
            Basis::Oam => "OAM",
            Basis::Ang => "ANG",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OAM" => Ok(Basis::Oam),
            "ANG" => Ok(Basis::Ang),
            other => Err(Error::Parse(format!("unknown basis tag {other:?}"))),
        }
    }
}

/// Receiver-plane `LG_{p,l}` modes (waist `w_z`) sampled on an aperture,
/// ready for repeated overlap integrals.
#[derive(Clone, Debug)]
pub struct ModalDecomposer<T: Real> {
    grid: Grid<T>,
    ls: Vec<i32>,
    p_max: u32,
    radius: T,
    indices: Vec<usize>,
    /// `conj(LG_{p,l}) · dA`, stored `[l][p][pixel]`.
    conj_modes: Vec<Vec<Vec<Complex<T>>>>,
}

impl<T: Real> ModalDecomposer<T> {
    pub fn new(grid: &Grid<T>, ls: &[i32], p_max: u32, radius: T, waist: T, wavelength: T, z: T) -> Result<Self> {
        let indices = grid.disk_indices(radius);
        let n = grid.n();
        let area = grid.cell_area();
        let polar: Vec<(T, T)> = indices
            .iter()
            .map(|&i| {
                let (x, y) = (grid.coord(i % n), grid.coord(i / n));
                (x.hypot(y), y.atan2(x))
            })
            .collect();
        let mut conj_modes = Vec::with_capacity(ls.len());
        for &l in ls {
            let mut per_p = Vec::with_capacity(p_max as usize + 1);
            for p in 0..=p_max {
                let spec = LgModeSpec::new(p, l, waist, wavelength)?;
                per_p.push(polar.iter().map(|&(r, phi)| spec.value(r, phi, z).conj() * area).collect());
            }
            conj_modes.push(per_p);
        }
        Ok(Self { grid: *grid, ls: ls.to_vec(), p_max, radius, indices, conj_modes })
    }

    pub fn ls(&self) -> &[i32] {
        &self.ls
    }

    pub fn p_max(&self) -> u32 {
        self.p_max
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// `⟨p, l | ψ⟩` over the aperture, as `[l][p]`.
    pub fn coefficients(&self, field: &ComplexField<T>) -> Result<Vec<Vec<Complex<f64>>>> {
        self.grid.ensure_same(&field.grid)?;
        let samples: Vec<Complex<T>> = self.indices.iter().map(|&i| field.data[i]).collect();
        Ok(self
            .conj_modes
            .iter()
            .map(|per_p| {
                per_p
                    .iter()
                    .map(|m| {
                        let c = samples.iter().zip(m).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b);
                        Complex::new(wide(c.re), wide(c.im))
                    })
                    .collect()
            })
            .collect())
    }
}

/// Radially summed OAM probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct OamSpectrum {
    pub ls: Vec<i32>,
    pub probabilities: Vec<f64>,
    /// `Σ_l p_l`, the fraction of unit input power found in the window.
    pub captured: f64,
}

/// `p_l = Σ_{p ≤ p_max} |⟨p,l|ψ⟩|²` over `ls`, integrating over the whole
/// grid (aperture radius = half-extent).
pub fn oam_spectrum<T: Real>(
    field: &ComplexField<T>,
    ls: &[i32],
    p_max: u32,
    waist: T,
    wavelength: T,
) -> Result<OamSpectrum> {
    let dec = ModalDecomposer::new(&field.grid, ls, p_max, field.grid.half_extent(), waist, wavelength, field.z)?;
    let c = dec.coefficients(field)?;
    let probabilities: Vec<f64> = c.iter().map(|per_p| per_p.iter().map(|v| v.norm_sqr()).sum()).collect();
    Ok(OamSpectrum { ls: ls.to_vec(), captured: probabilities.iter().sum(), probabilities })
}

/// Row-stochastic `d × d` crosstalk probabilities `p_{k→s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrosstalkMatrix {
    pub basis: Basis,
    pub realization: u64,
    pub t: f64,
    /// Column labels: target `l` (OAM) or angular index `j` (ANG).
    pub labels: Vec<i32>,
    pub d: usize,
    /// Normalized within the subspace; row-major.
    pub entries: Vec<f64>,
    /// Before normalization, relative to unit transmitted power.
    pub raw: Vec<f64>,
}

impl CrosstalkMatrix {
    pub fn from_raw(basis: Basis, labels: Vec<i32>, raw: Vec<f64>) -> Result<Self> {
        let d = labels.len();
        if raw.len() != d * d {
            return Err(Error::Config(format!("{} entries for a {d}×{d} matrix", raw.len())));
        }
        let mut entries = raw.clone();
        for k in 0..d {
            let row = &mut entries[k * d..(k + 1) * d];
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::DegenerateRow { row: k, basis: basis.tag() });
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self { basis, realization: 0, t: 0.0, labels, d, entries, raw })
    }

    pub fn at(&self, k: usize, s: usize) -> f64 {
        self.entries[k * self.d + s]
    }

    /// Subspace energy captured per input state.
    pub fn captured(&self) -> Vec<f64> {
        self.raw.chunks(self.d).map(|r| r.iter().sum()).collect()
    }

    pub fn identity(basis: Basis, labels: Vec<i32>) -> Self {
        let d = labels.len();
        let v: Vec<f64> = (0..d * d).map(|i| if i / d == i % d { 1.0 } else { 0.0 }).collect();
        Self { basis, realization: 0, t: 0.0, labels, d, entries: v.clone(), raw: v }
    }

    /// Writes the comment line, the label header and the `d` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# basis={} realization={} t={}", self.basis.tag(), self.realization, self.t)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.labels.iter().map(|l| l.to_string())).map_err(csv_err)?;
        for row in self.entries.chunks(self.d) {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Self::write_csv`]. Only the normalized
    /// entries are stored in the file, so `raw` comes back equal to them.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("crosstalk file must start with a '# basis=…' line".into()))?;
        let (mut basis, mut realization, mut t) = (None, 0u64, 0.0);
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv:?}")))?;
            match k {
                "basis" => basis = Some(v.parse::<Basis>()?),
                "realization" => realization = v.parse().map_err(|e| Error::Parse(format!("realization: {e}")))?,
                "t" => t = v.parse().map_err(|e| Error::Parse(format!("t: {e}")))?,
                _ => {}
            }
        }
        let basis = basis.ok_or_else(|| Error::Parse("header lacks basis=".into()))?;
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let labels = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.trim().parse::<i32>().map_err(|e| Error::Parse(format!("label {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let d = labels.len();
        let mut entries = Vec::with_capacity(d * d);
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d {
                return Err(Error::Parse(format!("row {row} has {} columns, expected {d}", rec.len())));
            }
            for (col, s) in rec.iter().enumerate() {
                entries.push(s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {row} column {col}: {e}")))?);
            }
        }
        if entries.len() != d * d {
            return Err(Error::Parse(format!("expected {d} rows, got {}", entries.len() / d.max(1))));
        }
        Ok(Self { basis, realization, t, labels, d, raw: entries.clone(), entries })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// OAM- and ANG-basis matrices from the propagated OAM basis states.
///
/// `coefficients[k]` holds `⟨p, l_m | ψ_k⟩` for received state `k` as
/// `[m][p]`. ANG inputs are superpositions of the received OAM states (the
/// channel is linear), and ANG outcomes project onto
/// `|j', p⟩ = Σ_m a_{j'm} |p, l_m⟩`.
pub fn crosstalk_matrices(mubs: &Mubs, coefficients: &[Vec<Vec<Complex<f64>>>]) -> Result<(CrosstalkMatrix, CrosstalkMatrix)> {
    let d = mubs.oam.len();
    if coefficients.len() != d || coefficients.iter().any(|c| c.len() != d) {
        return Err(Error::Config(format!("need {d} received states with {d} target modes each")));
    }
    let n_p = coefficients[0][0].len();
    let mut oam = vec![0.0; d * d];
    for k in 0..d {
        for m in 0..d {
            oam[k * d + m] = coefficients[k][m].iter().map(|c| c.norm_sqr()).sum();
        }
    }
    let mut ang = vec![0.0; d * d];
    for j in 0..d {
        // ⟨p, l_m | Σ_k a_{jk} ψ_k⟩
        let sent: Vec<Vec<Complex<f64>>> = (0..d)
            .map(|m| {
                (0..n_p)
                    .map(|p| (0..d).map(|k| mubs.ang[j][k] * coefficients[k][m][p]).sum())
                    .collect()
            })
            .collect();
        for jp in 0..d {
            ang[j * d + jp] = (0..n_p)
                .map(|p| (0..d).map(|m| mubs.ang[jp][m].conj() * sent[m][p]).sum::<Complex<f64>>().norm_sqr())
                .sum();
        }
    }
    Ok((
        CrosstalkMatrix::from_raw(Basis::Oam, mubs.oam.clone(), oam)?,
        CrosstalkMatrix::from_raw(Basis::Ang, (0..d as i32).collect(), ang)?,
    ))
}

/// Mean off-diagonal row mass of the normalized matrix.
pub fn qber(m: &CrosstalkMatrix) -> f64 {
    off_diagonal(&m.entries, m.d)
}

/// The same average taken over the unnormalized probabilities, so that
/// energy scattered out of the subspace does not count as error.
pub fn qber_unnormalized(m: &CrosstalkMatrix) -> f64 {
    off_diagonal(&m.raw, m.d)
}

fn off_diagonal(v: &[f64], d: usize) -> f64 {
    let total: f64 = (0..d * d).filter(|i| i / d != i % d).map(|i| v[i]).sum();
    total / d as f64
}

/// `r_min = log2 d + 2 [Q log2(Q/(d−1)) + (1−Q) log2(1−Q)]`, with
/// `0 · log 0 = 0`.
pub fn secret_key_rate(q: f64, d: usize) -> f64 {
    let xlog = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.log2() };
    (d as f64).log2() + 2.0 * (xlog(q, q / (d as f64 - 1.0)) + xlog(1.0 - q, 1.0 - q))
}

/// QBER at which `secret_key_rate` crosses zero, by bisection on `[0, 1 − 1/d]`.
pub fn qber_threshold(d: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 - 1.0 / d as f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if secret_key_rate(mid, d) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scores of one received frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub i: u64,
    pub t: f64,
    pub q_oam: f64,
    pub q_ang: f64,
    pub q: f64,
    pub r_min: f64,
    pub captured_energy: Vec<f64>,
    pub residues: usize,
}

impl ExperimentRecord {
    pub fn score(i: u64, t: f64, oam: &CrosstalkMatrix, ang: &CrosstalkMatrix, residues: usize, normalized: bool) -> Self {
        let (q_oam, q_ang) = if normalized {
            (qber(oam), qber(ang))
        } else {
            (qber_unnormalized(oam), qber_unnormalized(ang))
        };
        let q = (q_oam + q_ang) / 2.0;
        Self {
            i,
            t,
            q_oam,
            q_ang,
            q,
            r_min: secret_key_rate(q, oam.d),
            captured_energy: oam.captured(),
            residues,
        }
    }

    pub fn mean_captured(&self) -> f64 {
        self.captured_energy.iter().sum::<f64>() / self.captured_energy.len().max(1) as f64
    }
}

/// Unit-power transmitter fields of the OAM basis at `z = 0`.
pub fn transmitter_modes<T: Real>(mubs: &Mubs, cfg: &ProtocolConfig, grid: &Grid<T>, wavelength: T) -> Result<Vec<ComplexField<T>>> {
    mubs.oam
        .iter()
        .map(|&l| crate::modes::lg_field(&LgModeSpec::new(0, l, lit(cfg.waist), wavelength)?, grid, T::zero()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_sets() {
        let m = build_mubs(&ProtocolConfig::default()).unwrap();
        assert_eq!(m.oam, vec![-2, -1, 0, 1, 2]);
        let m = build_mubs(&ProtocolConfig { spacing: 2, ..Default::default() }).unwrap();
        assert_eq!(m.oam, vec![-4, -2, 0, 2, 4]);
        assert!(build_mubs(&ProtocolConfig { dimension: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn ang_table_is_unitary() {
        let m = build_mubs(&ProtocolConfig { dimension: 7, ..Default::default() }).unwrap();
        for a in 0..7 {
            for b in 0..7 {
                let dot: Complex<f64> = (0..7).map(|k| m.ang[a][k].conj() * m.ang[b][k]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qber_of_identity_and_uniform() {
        let id = CrosstalkMatrix::identity(Basis::Oam, vec![-2, -1, 0, 1, 2]);
        assert_eq!(qber(&id), 0.0);
        let u = CrosstalkMatrix::from_raw(Basis::Oam, vec![-2, -1, 0, 1, 2], vec![0.3; 25]).unwrap();
        assert!((qber(&u) - 0.8).abs() < 1e-12);
        assert!((qber_unnormalized(&u) - 0.3 * 20.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let mut raw = vec![0.1; 9];
        raw[3..6].iter_mut().for_each(|v| *v = 0.0);
        let e = CrosstalkMatrix::from_raw(Basis::Ang, vec![0, 1, 2], raw).unwrap_err();
        assert!(matches!(e, Error::DegenerateRow { row: 1, basis: "ANG" }));
    }

    #[test]
    fn key_rate_values() {
        assert!((secret_key_rate(0.0, 5) - 5f64.log2()).abs() < 1e-15);
        assert!(secret_key_rate(0.11, 2).abs() < 0.01);
        assert!(secret_key_rate(0.21, 5).abs() < 0.01);
        assert!((qber_threshold(2) - 0.11).abs() < 0.005);
        assert!((qber_threshold(5) - 0.21).abs() < 0.005);
    }

    #[test]
    fn basis_tags_round_trip() {
        for b in [Basis::Oam, Basis::Ang] {
            assert_eq!(b.tag().parse::<Basis>().unwrap(), b);
        }
        assert!("XYZ".parse::<Basis>().is_err());
    }

    #[test]
    fn record_total_is_basis_mean() {
        let labels = vec![-1, 0, 1];
        let a = CrosstalkMatrix::from_raw(Basis::Oam, labels.clone(), vec![0.8, 0.1, 0.1, 0.0, 1.0, 0.0, 0.2, 0.0, 0.6]).unwrap();
        let b = CrosstalkMatrix::identity(Basis::Ang, vec![0, 1, 2]);
        let r = ExperimentRecord::score(3, 0.5, &a, &b, 0, true);
        assert_eq!(r.q, (r.q_oam + r.q_ang) / 2.0);
        assert!(r.r_min <= 3f64.log2());
    }
}
