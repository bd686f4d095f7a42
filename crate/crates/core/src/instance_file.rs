//! Plain-text instance files.
//!
//! ```text
//! nare-instance 1
//! n 2
//! c 5.00000000000000000e-1
//! alpha 0.00000000000000000e0
//! 7.88675134594812866e-1 5.00000000000000000e-1
//! 2.11324865405187134e-1 5.00000000000000000e-1
//! ```
//!
//! The node lines hold `omega_i weight_i`, nodes in decreasing order.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{NareError, Result};
use crate::scalar::Real;
use crate::transport::{gauss_legendre, NareInstance, Quadrature, TransportParams};

pub const FORMAT_NAME: &str = "nare-instance";
pub const FORMAT_VERSION: u32 = 1;

/// Parameters plus quadrature: everything needed to rebuild an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec<T: Real> {
    pub params: TransportParams<T>,
    pub quad: Quadrature<T>,
}

impl<T: Real> InstanceSpec<T> {
    /// Parameters with the default Gauss–Legendre quadrature.
    pub fn gauss_legendre(params: TransportParams<T>) -> Self {
        InstanceSpec {
            quad: gauss_legendre(params.n()),
            params,
        }
    }

    pub fn build(&self) -> Result<NareInstance<T>> {
        NareInstance::build(&self.params, &self.quad)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_NAME} {FORMAT_VERSION}");
        let _ = writeln!(out, "n {}", self.params.n());
        let _ = writeln!(out, "c {:.17e}", self.params.c().as_f64());
        let _ = writeln!(out, "alpha {:.17e}", self.params.alpha().as_f64());
        for (w, cw) in self.quad.omega().iter().zip(self.quad.weights()) {
            let _ = writeln!(out, "{:.17e} {:.17e}", w.as_f64(), cw.as_f64());
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some(l) => Ok(l?),
                None => Err(NareError::Format(format!("unexpected end of file, expected {what}"))),
            }
        };

        let (ln, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(FORMAT_NAME) {
            return Err(NareError::Format(format!("line {ln}: missing `{FORMAT_NAME}` header")));
        }
        let version: u32 = parse(parts.next(), ln, "version")?;
        if version != FORMAT_VERSION {
            return Err(NareError::Format(format!("line {ln}: unsupported version {version}")));
        }

        let field = |line: (usize, String), key: &str| -> Result<(usize, String)> {
            let (ln, text) = line;
            let mut it = text.split_whitespace();
            if it.next() != Some(key) {
                return Err(NareError::Format(format!("line {ln}: expected `{key} <value>`")));
            }
            let value = it.next().ok_or_else(|| NareError::Format(format!("line {ln}: missing value for `{key}`")))?;
            if it.next().is_some() {
                return Err(NareError::Format(format!("line {ln}: trailing data after `{key}`")));
            }
            Ok((ln, value.to_string()))
        };
        let (ln, v) = field(next("n")?, "n")?;
        let n: usize = parse(Some(&v), ln, "n")?;
        let (ln, v) = field(next("c")?, "c")?;
        let c: f64 = parse(Some(&v), ln, "c")?;
        let (ln, v) = field(next("alpha")?, "alpha")?;
        let alpha: f64 = parse(Some(&v), ln, "alpha")?;

        let mut omega = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let (ln, text) = next(&format!("node line {} of {n}", i + 1))?;
            let mut it = text.split_whitespace();
            let w: f64 = parse(it.next(), ln, "omega")?;
            let cw: f64 = parse(it.next(), ln, "weight")?;
            if it.next().is_some() {
                return Err(NareError::Format(format!("line {ln}: expected exactly two numbers")));
            }
            omega.push(T::lit(w));
            weights.push(T::lit(cw));
        }
        if let Some(extra) = lines.next() {
            let (ln, _) = extra?;
            return Err(NareError::Format(format!("line {ln}: more node lines than n = {n}")));
        }
        Ok(InstanceSpec {
            params: TransportParams::new(T::lit(c), T::lit(alpha), n)?,
            quad: Quadrature::new(omega, weights)?,
        })
    }
}

fn parse<V: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<V> {
    let tok = tok.ok_or_else(|| NareError::Format(format!("line {line}: missing {what}")))?;
    tok.parse()
        .map_err(|_| NareError::Format(format!("line {line}: cannot parse {what} from `{tok}`")))
}
