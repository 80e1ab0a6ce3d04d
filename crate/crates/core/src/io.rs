//! CSV input and TSV output.
//!
//! Numbers are written with 12 significant digits. Absent estimates print as `—`.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::bounds::{CiConfig, CiResult, ConstraintMode};
use crate::em::EmResult;
use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::general::{GeneralEstimate, GeneralStratum};
use crate::model::{MixingWeights, Observation, SupportGrid, ThetaPoint};
use crate::sim::SimSummary;

/// Weights below this are left out of `weights.tsv`.
pub const WEIGHT_PRINT_FLOOR: f64 = 1e-12;

pub const ABSENT: &str = "—";

/// `%.12g`-style formatting.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    // Scientific form first, so the exponent reflects rounding to 12 digits.
    let sci = format!("{x:.11e}");
    let (mant, e) = sci.split_once('e').expect("exponent");
    let exp: i32 = e.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| ABSENT.into())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

fn parse_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

/// Read the `x,k` observation CSV.
pub fn read_observations<R: Read>(input: R) -> Result<Vec<Observation>> {
    let mut rdr = csv_reader(input);
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let (ix, ik) = (header_index(&headers, "x")?, header_index(&headers, "k")?);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let line = line_of(&rec, row + 2);
        let field = |i: usize, name: &str| -> Result<u64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing {name}"),
                })?
                .parse::<u64>()
                .map_err(|_| Error::Parse {
                    line,
                    message: format!(
                        "{name} = {:?} is not a nonnegative integer",
                        rec.get(i).unwrap_or("")
                    ),
                })
        };
        let (x, k) = (field(ix, "x")?, field(ik, "k")?);
        if x > k {
            return Err(Error::Parse {
                line,
                message: format!("x = {x} exceeds k = {k}"),
            });
        }
        out.push(Observation { x, k });
    }
    if out.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(out)
}

pub fn write_observations<W: Write>(mut out: W, obs: &[Observation]) -> Result<()> {
    writeln!(out, "x,k")?;
    for o in obs {
        writeln!(out, "{},{}", o.x, o.k)?;
    }
    Ok(())
}

/// Strata read from the long-format CSV, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralData {
    pub ids: Vec<String>,
    pub strata: Vec<GeneralStratum>,
}

/// Read `stratum,a,value` rows plus an optional `stratum,a` file declaring strata
/// (including ones with no observed units).
pub fn read_general<R: Read, S: Read>(long: R, declared: Option<S>) -> Result<GeneralData> {
    let mut ids: Vec<String> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let parse_f64 = |s: &str, line: usize, name: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("{name} = {s:?} is not a number"),
        })
    };

    if let Some(decl) = declared {
        let mut rdr = csv_reader(decl);
        let headers = rdr.headers().map_err(parse_err)?.clone();
        let (is, ia) = (
            header_index(&headers, "stratum")?,
            header_index(&headers, "a")?,
        );
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(parse_err)?;
            let line = line_of(&rec, row + 2);
            let id = rec.get(is).unwrap_or("").to_string();
            let a = parse_f64(rec.get(ia).unwrap_or(""), line, "a")?;
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("stratum {id:?} declared twice"),
                });
            }
            ids.push(id);
            weights.push(a);
            values.push(Vec::new());
        }
    }

    let mut rdr = csv_reader(long);
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let (is, ia, iv) = (
        header_index(&headers, "stratum")?,
        header_index(&headers, "a")?,
        header_index(&headers, "value")?,
    );
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let line = line_of(&rec, row + 2);
        let id = rec.get(is).unwrap_or("").to_string();
        let a = parse_f64(rec.get(ia).unwrap_or(""), line, "a")?;
        let v = parse_f64(rec.get(iv).unwrap_or(""), line, "value")?;
        if v < 0.0 || a < 0.0 {
            return Err(Error::Parse {
                line,
                message: "values and weights must be nonnegative".into(),
            });
        }
        let slot = match index.get(&id) {
            Some(&s) => {
                if weights[s] != a {
                    return Err(Error::Parse {
                        line,
                        message: format!("stratum {id:?} has inconsistent weight {a}"),
                    });
                }
                s
            }
            None => {
                index.insert(id.clone(), ids.len());
                ids.push(id);
                weights.push(a);
                values.push(Vec::new());
                ids.len() - 1
            }
        };
        values[slot].push(v);
    }
    let strata = weights
        .into_iter()
        .zip(values)
        .map(|(a, values)| GeneralStratum { a, values })
        .collect();
    Ok(GeneralData { ids, strata })
}

pub fn write_weights<W: Write>(mut out: W, grid: &SupportGrid, w: &MixingWeights) -> Result<()> {
    let binomial = matches!(grid.points().first(), Some(ThetaPoint::Binomial { .. }));
    if binomial {
        writeln!(out, "pi\tp\tweight")?;
    } else {
        writeln!(out, "xi1\txi2\tlambda\tp\tweight")?;
    }
    for (t, &wj) in grid.points().iter().zip(w.as_slice()) {
        if wj < WEIGHT_PRINT_FLOOR {
            continue;
        }
        let (a, b) = t.coords();
        if binomial {
            writeln!(out, "{}\t{}\t{}", fmt_num(a), fmt_num(b), fmt_num(wj))?;
        } else {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                fmt_num(a),
                fmt_num(b),
                fmt_num(t.theta1()),
                fmt_num(t.theta2()),
                fmt_num(wj)
            )?;
        }
    }
    Ok(())
}

pub fn write_trace<W: Write>(mut out: W, em: &EmResult) -> Result<()> {
    writeln!(out, "iteration\tloglik")?;
    for (i, ll) in em.log_lik_trace.iter().enumerate() {
        writeln!(out, "{i}\t{}", fmt_num(*ll))?;
    }
    Ok(())
}

pub fn write_estimates<W: Write>(mut out: W, report: &EstimateReport) -> Result<()> {
    writeln!(out, "estimator\tvalue")?;
    for (name, v) in report.rows() {
        writeln!(out, "{name}\t{}", fmt_opt(v))?;
    }
    writeln!(out, "m_zero\t{}", report.m_zero)?;
    Ok(())
}

/// Parse `estimates.tsv` back into `(name, value)` pairs.
pub fn read_estimates<R: Read>(input: R) -> Result<Vec<(String, Option<f64>)>> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let (name, v) = l.split_once('\t').ok_or(Error::Parse {
                line: i + 1,
                message: "expected two columns".into(),
            })?;
            let v = if v == ABSENT {
                None
            } else {
                Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad value {v:?}"),
                })?)
            };
            Ok((name.to_string(), v))
        })
        .collect()
}

pub fn write_posteriors<W: Write>(
    mut out: W,
    obs: &[Observation],
    report: &EstimateReport,
) -> Result<()> {
    writeln!(out, "stratum\tx\tk\tposterior_mean")?;
    for (i, (o, p)) in obs.iter().zip(&report.posterior_means).enumerate() {
        writeln!(out, "{}\t{}\t{}\t{}", i + 1, o.x, o.k, fmt_num(*p))?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, summary: &SimSummary) -> Result<()> {
    writeln!(out, "estimator\tmean\tsd\treps\ttrue_p")?;
    for e in &summary.estimators {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.name,
            fmt_opt(e.mean),
            e.sd.map(fmt_num).unwrap_or_default(),
            e.count,
            fmt_num(summary.true_p)
        )?;
    }
    Ok(())
}

pub fn write_ci<W: Write>(mut out: W, ci: &CiResult, cfg: &CiConfig) -> Result<()> {
    let mode = match cfg.mode {
        ConstraintMode::ChiSquare => "chi2".to_string(),
        ConstraintMode::LogPower { alpha_exp } => format!("logpower({})", fmt_num(alpha_exp)),
    };
    writeln!(out, "lower\tupper\talpha\tmode\tdeviance_at_gmle\tgmle")?;
    writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}",
        fmt_num(ci.lower),
        fmt_num(ci.upper),
        fmt_num(cfg.alpha),
        mode,
        fmt_num(ci.deviance_at_gmle),
        fmt_num(ci.gmle_plugin)
    )?;
    Ok(())
}

/// Per-threshold survival estimates.
pub fn write_general<W: Write>(mut out: W, est: &GeneralEstimate) -> Result<()> {
    writeln!(out, "threshold\traw_survival\tsurvival")?;
    for ((c, r), s) in est
        .thresholds
        .iter()
        .zip(&est.raw_survival)
        .zip(&est.survival)
    {
        writeln!(out, "{}\t{}\t{}", fmt_num(*c), fmt_num(*r), fmt_num(*s))?;
    }
    Ok(())
}

/// Long-format `stratum,a,value` rows. Strata without units produce no rows.
pub fn write_general_long<W: Write>(
    mut out: W,
    ids: &[String],
    strata: &[GeneralStratum],
) -> Result<()> {
    writeln!(out, "stratum,a,value")?;
    for (id, s) in ids.iter().zip(strata) {
        for v in &s.values {
            writeln!(out, "{id},{},{}", fmt_num(s.a), fmt_num(*v))?;
        }
    }
    Ok(())
}

/// `stratum,a` declarations for every stratum, so empty ones survive a round trip.
pub fn write_general_declared<W: Write>(
    mut out: W,
    ids: &[String],
    strata: &[GeneralStratum],
) -> Result<()> {
    writeln!(out, "stratum,a")?;
    for (id, s) in ids.iter().zip(strata) {
        writeln!(out, "{id},{}", fmt_num(s.a))?;
    }
    Ok(())
}
