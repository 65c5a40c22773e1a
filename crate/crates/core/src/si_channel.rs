//! Self-interference coupling matrix `H` (N Rx rows by M Tx columns).
//!
//! The built-in generator is a distance-decay stand-in for an electromagnetic
//! simulation: `H[n, m] = s * exp(-j 2pi d) / d` with `d` the Tx-Rx separation in
//! wavelengths and `s` chosen so the mean coupling power hits a reference level.
//! Externally simulated or measured matrices come in through [`load_channel`].
//!
//! File format (UTF-8 text): first line `N,M`, then `N` rows of `M`
//! comma-separated `re:im` entries. Blank lines and `#` comments are skipped.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array_model::{ArrayGeometry, Subarray};
use crate::error::{ChannelFileError, ModelError};

/// Default mean Tx-Rx coupling power, in dB.
pub const DEFAULT_REFERENCE_COUPLING_DB: f64 = -30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<Complex64>,
}

impl ChannelMatrix {
    /// Wraps a matrix after checking that every entry is finite and there is
    /// at least one Tx column. Zero Rx rows are allowed (no SI constraints).
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, ModelError> {
        if entries.ncols() == 0 {
            return Err(ModelError::Channel("channel has no Tx columns".into()));
        }
        if let Some(bad) = entries.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(ModelError::Channel(format!("non-finite entry at flat index {bad}")));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Number of Rx antennas `N`.
    pub fn num_rx(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of Tx antennas `M`.
    pub fn num_tx(&self) -> usize {
        self.entries.ncols()
    }

    /// Row `H_n` as a column vector.
    pub fn row(&self, n: usize) -> DVector<Complex64> {
        self.entries.row(n).transpose()
    }

    /// `C_n = H_n^* H_n` (M x M, rank one).
    pub fn constraint_matrix(&self, n: usize) -> DMatrix<Complex64> {
        let h = self.entries.row(n);
        h.adjoint() * h
    }

    /// `H f`, the complex SI amplitude at every Rx antenna.
    pub fn apply(&self, f: &DVector<Complex64>) -> Result<DVector<Complex64>, ModelError> {
        if f.len() != self.num_tx() {
            return Err(ModelError::Dimension(format!(
                "weights have length {}, channel has {} Tx columns",
                f.len(),
                self.num_tx()
            )));
        }
        Ok(&self.entries * f)
    }

    /// Mean of `|H[n, m]|^2` over all entries.
    pub fn mean_power(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.entries.len() as f64
    }
}

fn scale_for(reference_coupling_db: f64) -> Result<f64, ModelError> {
    let target = 10f64.powf(reference_coupling_db / 10.0);
    if !reference_coupling_db.is_finite() || !target.is_finite() || target <= 0.0 {
        return Err(ModelError::Parameter(format!(
            "reference coupling {reference_coupling_db} dB is out of range"
        )));
    }
    Ok(target)
}

fn normalize(raw: DMatrix<Complex64>, target: f64) -> Result<ChannelMatrix, ModelError> {
    let mean = raw.iter().map(|v| v.norm_sqr()).sum::<f64>() / raw.len() as f64;
    let s = (target / mean).sqrt();
    if !s.is_finite() {
        return Err(ModelError::Parameter("coupling normalization overflowed".into()));
    }
    ChannelMatrix::new(raw.map(|v| v * s))
}

/// Near-field distance-decay coupling with spherical-wave phase.
pub fn synth_coupling(
    geometry: &ArrayGeometry,
    reference_coupling_db: f64,
) -> Result<ChannelMatrix, ModelError> {
    let target = scale_for(reference_coupling_db)?;
    let rx = geometry.subarray_positions(Subarray::Rx);
    let tx = geometry.subarray_positions(Subarray::Tx);
    let raw = DMatrix::from_fn(rx.len(), tx.len(), |n, m| {
        let d = ((rx[n][0] - tx[m][0]).powi(2) + (rx[n][1] - tx[m][1]).powi(2)).sqrt();
        Complex64::from_polar(1.0 / d, -TAU * d)
    });
    normalize(raw, target)
}

/// [`synth_coupling`] plus a seeded complex Gaussian scatter component
/// `scatter_db` below the direct coupling, renormalized to the reference level.
/// Used to generate families of reproducible test instances.
pub fn synth_coupling_with_scatter(
    geometry: &ArrayGeometry,
    reference_coupling_db: f64,
    scatter_db: f64,
    seed: u64,
) -> Result<ChannelMatrix, ModelError> {
    let target = scale_for(reference_coupling_db)?;
    let direct = synth_coupling(geometry, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 10f64.powf(scatter_db / 20.0) / std::f64::consts::SQRT_2;
    let raw = direct.entries.map(|v| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        v + Complex64::new(re, im) * sigma
    });
    normalize(raw, target)
}

/// Seeded i.i.d. complex Gaussian `N x M` channel at the given mean power.
pub fn random_coupling(
    num_rx: usize,
    num_tx: usize,
    reference_coupling_db: f64,
    seed: u64,
) -> Result<ChannelMatrix, ModelError> {
    let target = scale_for(reference_coupling_db)?;
    if num_rx == 0 || num_tx == 0 {
        return Err(ModelError::Channel("random channel needs N, M >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(num_rx, num_tx, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    normalize(raw, target)
}

fn parse_f64(text: &str, line: usize) -> Result<f64, ChannelFileError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| ChannelFileError::parse(line, format!("non-numeric field {:?}", text.trim())))?;
    if !v.is_finite() {
        return Err(ChannelFileError::parse(line, format!("non-finite value {v}")));
    }
    Ok(v)
}

/// Parses the channel text format.
pub fn load_channel<R: BufRead>(source: R) -> Result<ChannelMatrix, ChannelFileError> {
    let mut dims: Option<(usize, usize)> = None;
    let mut data: Vec<Complex64> = Vec::new();
    let mut rows_read = 0usize;
    let mut last_line = 0usize;

    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        match dims {
            None => {
                let parts: Vec<&str> = body.split(',').collect();
                if parts.len() != 2 {
                    return Err(ChannelFileError::parse(lineno, "header must be \"N,M\""));
                }
                let parse_dim = |t: &str| {
                    t.trim().parse::<usize>().map_err(|_| {
                        ChannelFileError::parse(lineno, format!("bad dimension {:?}", t.trim()))
                    })
                };
                let (n, m) = (parse_dim(parts[0])?, parse_dim(parts[1])?);
                if n == 0 || m == 0 {
                    return Err(ChannelFileError::parse(lineno, "dimensions must be positive"));
                }
                dims = Some((n, m));
                data.reserve(n * m);
            }
            Some((n, m)) => {
                if rows_read == n {
                    return Err(ChannelFileError::parse(
                        lineno,
                        format!("row count mismatch: more than the declared {n} rows"),
                    ));
                }
                let fields: Vec<&str> = body.split(',').collect();
                if fields.len() != m {
                    return Err(ChannelFileError::parse(
                        lineno,
                        format!("expected {m} entries, found {}", fields.len()),
                    ));
                }
                for field in fields {
                    let (re, im) = field.split_once(':').ok_or_else(|| {
                        ChannelFileError::parse(lineno, format!("malformed entry {:?}", field.trim()))
                    })?;
                    data.push(Complex64::new(parse_f64(re, lineno)?, parse_f64(im, lineno)?));
                }
                rows_read += 1;
            }
        }
    }

    let (n, m) = dims.ok_or_else(|| ChannelFileError::parse(last_line.max(1), "missing header"))?;
    if rows_read != n {
        return Err(ChannelFileError::parse(
            last_line.max(1),
            format!("row count mismatch: declared {n}, found {rows_read}"),
        ));
    }
    Ok(ChannelMatrix::new(DMatrix::from_row_slice(n, m, &data))?)
}

/// Writes the channel text format. `f64` display output is the shortest
/// representation that parses back to the same bits, so the round trip is exact.
pub fn save_channel<W: Write>(h: &ChannelMatrix, mut sink: W) -> Result<(), ChannelFileError> {
    let (n, m) = (h.num_rx(), h.num_tx());
    if n == 0 || m == 0 {
        return Err(ChannelFileError::Empty);
    }
    writeln!(sink, "{n},{m}")?;
    for r in 0..n {
        let row: Vec<String> = (0..m)
            .map(|c| {
                let v = h.entries[(r, c)];
                format!("{}:{}", v.re, v.im)
            })
            .collect();
        writeln!(sink, "{}", row.join(","))?;
    }
    sink.flush()?;
    Ok(())
}
