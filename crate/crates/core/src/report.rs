//! Result serialization: RFC-4180 CSV tables and `key=value` summaries,
//! both prefixed with a provenance header that pins the exact run.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting, so parsing a table back recovers the bits that were computed.

use crate::config::LinkConfig;
use std::io::{self, Write};

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub version: &'static str,
    pub config_hash: u64,
    pub seed: u64,
    pub quadrature_note: String,
}

impl Provenance {
    pub fn from_config(cfg: &LinkConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            quadrature_note: format!(
                "radial={} angular={} capacity_order={} efficiency_order={}",
                cfg.quad_radial_order,
                cfg.quad_angular_order,
                cfg.capacity_quadrature_order,
                cfg.efficiency_quadrature_order
            ),
        }
    }

    fn header_lines(&self) -> String {
        format!(
            "# fmf-link v{}\n# config_hash=0x{:016x}\n# seed={}\n# quadrature: {}\n",
            self.version, self.config_hash, self.seed, self.quadrature_note
        )
    }
}

/// Quotes a field per RFC 4180: quoting is applied only when the field
/// contains a comma, a quote or a line break, and embedded quotes double.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip decimal form of a double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes a provenance-stamped CSV table.
pub fn write_csv<W: Write>(
    out: &mut W,
    prov: &Provenance,
    header: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    out.write_all(prov.header_lines().as_bytes())?;
    writeln!(
        out,
        "{}",
        header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",")
    )?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writeln!(
            out,
            "{}",
            row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",")
        )?;
    }
    Ok(())
}

/// Writes a provenance-stamped `key=value` summary. A `status` key is the
/// convention for success/failure of the producing command.
pub fn write_summary<W: Write>(
    out: &mut W,
    prov: &Provenance,
    pairs: &[(String, String)],
) -> io::Result<()> {
    out.write_all(prov.header_lines().as_bytes())?;
    for (k, v) in pairs {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance::from_config(&LinkConfig::default())
    }

    #[test]
    fn csv_quoting_follows_rfc4180() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_field("two\nlines"), "\"two\nlines\"");
        assert_eq!(csv_field(""), "");
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [
            0.8145287551781474,
            1.1209064110073483,
            -1.25e-3,
            1e10,
            0.1 + 0.2,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_carries_provenance_and_rows() {
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &provenance(),
            &["beta", "eta_LP01"],
            &[
                vec!["1.01".into(), "0.8154".into()],
                vec!["1.02".into(), "0.8165".into()],
            ],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# fmf-link v"));
        assert!(lines[1].starts_with("# config_hash=0x"));
        assert!(lines[2].starts_with("# seed="));
        assert!(lines[3].starts_with("# quadrature: radial=128"));
        assert_eq!(lines[4], "beta,eta_LP01");
        assert_eq!(lines[5], "1.01,0.8154");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn summary_is_flat_key_value() {
        let mut buf = Vec::new();
        write_summary(
            &mut buf,
            &provenance(),
            &[
                ("status".into(), "ok".into()),
                ("best_set".into(), "0|1".into()),
            ],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\nstatus=ok\n"));
        assert!(text.ends_with("best_set=0|1\n"));
    }

    #[test]
    fn provenance_tracks_config_content() {
        let a = provenance();
        let mut cfg = LinkConfig::default();
        cfg.seed = 9;
        let b = Provenance::from_config(&cfg);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(b.seed, 9);
    }
}
