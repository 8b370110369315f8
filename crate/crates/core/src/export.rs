//! CSV tables for plotting.
//!
//! Column names are frozen. Doubles are written as the shortest decimal that
//! round-trips; extended-precision values carry 40 significant digits. A
//! missing value (undefined implied vol, no transition in range) is an empty
//! field.

use std::io::Write;

use crate::criticality::{PhaseRow, ZeroSet};
use crate::error::Result;
use crate::mc::McReport;
use crate::pricing::{ArrearsQuote, CapletQuote};
use crate::wide::WideReal;

pub const WIDE_DIGITS: usize = 40;

pub const PDF_HEADER: [&str; 2] = ["L", "density"];
pub const SMILE_HEADER: [&str; 3] = ["K", "price", "sigma_BS"];
pub const SIGMA_LN_HEADER: [&str; 3] = ["psi", "sigma_ln", "sigma_bs_atm"];
pub const ZEROS_HEADER: [&str; 5] = ["psi", "re", "im", "circle1_radius", "circle2_radius"];
pub const PHASE_HEADER: [&str; 5] = ["r0", "tau", "psi_cr_exact", "psi_cr_eq21", "psi_cr_eq22"];
pub const ARREARS_HEADER: [&str; 3] = ["psi", "A", "sigma_LN"];
pub const MC_HEADER: [&str; 8] = [
    "psi", "i", "n_paths", "seed", "estimate", "stderr", "analytic", "ratio",
];

/// Shortest round-trip decimal, switching to exponent form for very large or
/// small magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_wide(x: &WideReal) -> String {
    x.to_sci_string(WIDE_DIGITS)
}

fn write_table<W: Write, I>(out: W, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `L,density`.
pub fn write_pdf<W: Write>(out: W, points: &[(f64, f64)]) -> Result<()> {
    write_table(
        out,
        &PDF_HEADER,
        points.iter().map(|(l, d)| vec![fmt_f64(*l), fmt_f64(*d)]),
    )
}

/// `K,price,sigma_BS`.
pub fn write_smile<W: Write>(out: W, quotes: &[CapletQuote]) -> Result<()> {
    write_table(
        out,
        &SMILE_HEADER,
        quotes
            .iter()
            .map(|q| vec![fmt_f64(q.strike), fmt_f64(q.price), fmt_opt(q.sigma_bs)]),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaLnRow {
    pub psi: f64,
    pub sigma_ln: Option<f64>,
    pub sigma_bs_atm: Option<f64>,
}

/// `psi,sigma_ln,sigma_bs_atm`.
pub fn write_sigma_ln<W: Write>(out: W, rows: &[SigmaLnRow]) -> Result<()> {
    write_table(
        out,
        &SIGMA_LN_HEADER,
        rows.iter()
            .map(|r| vec![fmt_f64(r.psi), fmt_opt(r.sigma_ln), fmt_opt(r.sigma_bs_atm)]),
    )
}

/// `psi,re,im,circle1_radius,circle2_radius`: one row per zero, with the
/// circles `e^{psi^2 t_i}` and `e^{2 psi^2 t_i}` repeated on every row.
pub fn write_zeros<W: Write>(out: W, sets: &[(ZeroSet, f64)]) -> Result<()> {
    let rows = sets.iter().flat_map(|(set, t)| {
        let psi = set.psi.unwrap_or(f64::NAN);
        let v = psi * psi * t;
        let (c1, c2) = (fmt_f64(v.exp()), fmt_f64((2.0 * v).exp()));
        set.zeros.iter().map(move |z| {
            vec![
                fmt_f64(psi),
                fmt_wide(&z.re),
                fmt_wide(&z.im),
                c1.clone(),
                c2.clone(),
            ]
        })
    });
    write_table(out, &ZEROS_HEADER, rows)
}

/// `r0,tau,psi_cr_exact,psi_cr_eq21,psi_cr_eq22`; the last two columns hold
/// the zero-radius and simplified closed-form estimates.
pub fn write_phase<W: Write>(out: W, rows: &[PhaseRow]) -> Result<()> {
    write_table(
        out,
        &PHASE_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.r0),
                fmt_f64(r.tau),
                fmt_opt(r.exact),
                fmt_opt(r.zero_radius),
                fmt_opt(r.simplified),
            ]
        }),
    )
}

/// `psi,A,sigma_LN`.
pub fn write_arrears<W: Write>(out: W, rows: &[(f64, ArrearsQuote)]) -> Result<()> {
    write_table(
        out,
        &ARREARS_HEADER,
        rows.iter()
            .map(|(psi, q)| vec![fmt_f64(*psi), fmt_f64(q.price), fmt_f64(q.sigma_ln)]),
    )
}

/// Same fields as the JSON report.
pub fn write_mc<W: Write>(out: W, rows: &[McReport]) -> Result<()> {
    write_table(
        out,
        &MC_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.psi),
                r.i.to_string(),
                r.n_paths.to_string(),
                r.seed.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.stderr),
                fmt_f64(r.analytic),
                fmt_opt(r.ratio),
            ]
        }),
    )
}

/// Re-reads a table as a JSON array of row objects. Fields that are the
/// shortest form of a double become numbers, empty fields become null and
/// anything else (extended-precision values) stays a string.
pub fn table_to_json(csv_text: &[u8]) -> Result<serde_json::Value> {
    use serde_json::{Map, Number, Value};
    let mut r = csv::Reader::from_reader(csv_text);
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let mut obj = Map::new();
        for (name, field) in header.iter().zip(record.iter()) {
            let value = if field.is_empty() {
                Value::Null
            } else {
                match field.parse::<f64>().ok().filter(|v| fmt_f64(*v) == field) {
                    Some(v)
                        if v.fract() == 0.0 && v.abs() < 9e15 && !field.contains(['.', 'e']) =>
                    {
                        Value::Number((v as i64).into())
                    }
                    Some(v) => Number::from_f64(v).map_or(Value::Null, Value::Number),
                    None => Value::String(field.to_string()),
                }
            };
            obj.insert(name.to_string(), value);
        }
        rows.push(Value::Object(obj));
    }
    Ok(Value::Array(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::zeros_at;
    use crate::curve::{TenorStructure, YieldCurve};
    use crate::solver::solve;

    #[test]
    fn floats_round_trip() {
        for x in [
            0.0,
            1.0,
            0.05,
            1.0 / 3.0,
            5.0314e-2,
            1e-300,
            6.02e23,
            -2.5e-7,
            123456.789,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn smile_schema() {
        let q = CapletQuote {
            horizon: 30,
            strike: 0.05,
            price: 1e-3,
            forward: 0.05,
            sigma_bs: None,
        };
        let mut buf = Vec::new();
        write_smile(&mut buf, &[q]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "K,price,sigma_BS\n0.05,0.001,\n"
        );
    }

    #[test]
    fn zeros_rows() {
        let c = YieldCurve::flat(0.05, TenorStructure::uniform(40, 0.25).unwrap()).unwrap();
        let sol = solve(&c, 0.3, 256).unwrap();
        let set = zeros_at(&sol, 30).unwrap();
        let mut buf = Vec::new();
        write_zeros(&mut buf, &[(set, 7.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ZEROS_HEADER.join(","));
        assert_eq!(lines.len(), 10);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[3].parse::<f64>().unwrap(), (0.09f64 * 7.5).exp());
    }

    #[test]
    fn phase_and_mc_headers() {
        let mut buf = Vec::new();
        write_phase(
            &mut buf,
            &[PhaseRow {
                r0: 0.05,
                tau: 0.25,
                exact: Some(0.33),
                zero_radius: None,
                simplified: Some(0.29),
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "r0,tau,psi_cr_exact,psi_cr_eq21,psi_cr_eq22\n0.05,0.25,0.33,,0.29\n"
        );
        let mut buf = Vec::new();
        write_mc(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), MC_HEADER.join(",") + "\n");
    }

    #[test]
    fn json_view_keeps_wide_strings() {
        let text = b"psi,re,n,k\n0.3,1.234567890123456789012345678901234567890e0,40,\n";
        let v = table_to_json(text).unwrap();
        assert_eq!(v[0]["psi"], serde_json::json!(0.3));
        assert!(v[0]["re"].is_string());
        assert_eq!(v[0]["n"], serde_json::json!(40));
        assert!(v[0]["k"].is_null());
    }
}
