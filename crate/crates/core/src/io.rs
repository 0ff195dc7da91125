//! Text file formats for maps and sample sets.
//!
//! Map files are line oriented:
//!
//! ```text
//! TRIMAP 1
//! dim 2
//! direction direct
//! hermite probabilists-unnormalized
//! premap <shift_1 .. shift_n> <scale_1 .. scale_n>      (optional)
//! component 1 polynomial
//! indexset total 1 3 4                                   (kind, k, degree, rows)
//! 0 0
//! ...
//! coeffs 4
//! 1.0000000000000000e0
//! ...
//! ```
//!
//! Monotone components are written as `component k monotone <quad order>`
//! followed by two `indexset` blocks (`a` then `b`); RBF components as
//! `component k rbf <count>`, a `centers` block of `count` rows and a `scales`
//! block. Every real is printed with 17 significant digits so that files
//! round-trip bit for bit.
//!
//! Sample files are whitespace-delimited rows preceded by `#` comment lines;
//! `# dim`, `# provenance` and `# seed` are read back when present.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::basis::{IndexSetKind, MultiIndex, MultiIndexSet};
use crate::error::{Result, TrimapError};
use crate::map::{AffinePremap, Direction, MapComponent, MonotoneParts, Parameterization, TriangularMap};
use crate::quadrature::{Provenance, SampleSet};

pub const MAP_FORMAT_VERSION: &str = "1";
pub const HERMITE_CONVENTION: &str = "probabilists-unnormalized";

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn map_to_string(map: &TriangularMap) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "TRIMAP {MAP_FORMAT_VERSION}");
    let _ = writeln!(s, "dim {}", map.dim());
    let _ = writeln!(s, "direction {}", map.direction().as_str());
    let _ = writeln!(s, "hermite {HERMITE_CONVENTION}");
    if let Some(p) = map.premap() {
        let vals: Vec<String> = p.shift().iter().chain(p.scale()).map(|v| fmt_real(*v)).collect();
        let _ = writeln!(s, "premap {}", vals.join(" "));
    }
    for c in map.components() {
        match c.parameterization() {
            Parameterization::Polynomial(set) => {
                let _ = writeln!(s, "component {} polynomial", c.k());
                write_set(&mut s, set);
            }
            Parameterization::IntegratedExponential(parts) => {
                let _ = writeln!(s, "component {} monotone {}", c.k(), parts.quad_order());
                write_set(&mut s, &parts.a_set);
                write_set(&mut s, &parts.b_set);
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                let _ = writeln!(s, "component {} rbf {}", c.k(), centers.len());
                let _ = writeln!(s, "centers");
                for center in centers {
                    let row: Vec<String> = center.iter().map(|v| fmt_real(*v)).collect();
                    let _ = writeln!(s, "{}", row.join(" "));
                }
                let _ = writeln!(s, "scales");
                for v in scales {
                    let _ = writeln!(s, "{}", fmt_real(*v));
                }
            }
        }
        let _ = writeln!(s, "coeffs {}", c.num_coefficients());
        for v in c.coefficients() {
            let _ = writeln!(s, "{}", fmt_real(*v));
        }
    }
    s
}

fn write_set(s: &mut String, set: &MultiIndexSet) {
    let _ = writeln!(
        s,
        "indexset {} {} {} {}",
        set.kind().as_str(),
        set.component(),
        set.max_degree(),
        set.len()
    );
    for idx in set.indices() {
        let row: Vec<String> = idx.entries().iter().map(|j| j.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
}

pub fn save_map(map: &TriangularMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, map_to_string(map))?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<TriangularMap> {
    map_from_str(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Ok(l);
        }
        Err(TrimapError::Parse {
            line: self.line + 1,
            message: "unexpected end of file".into(),
        })
    }

    fn err(&self, message: impl Into<String>) -> TrimapError {
        TrimapError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyword(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`, found `{l}`")));
        }
        Ok(parts.collect())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn reals(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                let l = self.next_line()?;
                self.parse(l)
            })
            .collect()
    }
}

pub fn map_from_str(text: &str) -> Result<TriangularMap> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.keyword("TRIMAP")?;
    match header.as_slice() {
        [v] if *v == MAP_FORMAT_VERSION => {}
        [v] => return Err(TrimapError::UnsupportedVersion((*v).to_string())),
        _ => return Err(lines.err("malformed TRIMAP header")),
    }
    let dim: usize = match lines.keyword("dim")?.as_slice() {
        [d] => lines.parse(d)?,
        _ => return Err(lines.err("malformed dim line")),
    };
    let direction = match lines.keyword("direction")?.as_slice() {
        [d] => Direction::parse(d)?,
        _ => return Err(lines.err("malformed direction line")),
    };
    match lines.keyword("hermite")?.as_slice() {
        [c] if *c == HERMITE_CONVENTION => {}
        _ => return Err(lines.err("unsupported Hermite convention")),
    }

    let mut premap = None;
    let mut components = Vec::with_capacity(dim);
    let mut pending = Some(lines.next_line()?);
    while let Some(l) = pending.take() {
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("premap") => {
                let vals = parts.map(|v| lines.parse(v)).collect::<Result<Vec<f64>>>()?;
                if vals.len() != 2 * dim {
                    return Err(lines.err(format!("premap needs {} reals", 2 * dim)));
                }
                premap = Some(AffinePremap::new(vals[..dim].to_vec(), vals[dim..].to_vec())?);
            }
            Some("component") => {
                let rest: Vec<&str> = parts.collect();
                components.push(read_component(&mut lines, &rest, dim)?);
            }
            _ => return Err(lines.err(format!("unexpected line `{l}`"))),
        }
        if components.len() < dim {
            pending = Some(lines.next_line()?);
        }
    }
    TriangularMap::new(direction, components, premap)
}

fn read_component(lines: &mut Lines<'_>, head: &[&str], dim: usize) -> Result<MapComponent> {
    let k: usize = lines.parse(head.first().ok_or_else(|| lines.err("missing component index"))?)?;
    let kind = *head.get(1).ok_or_else(|| lines.err("missing component kind"))?;
    let param = match kind {
        "polynomial" => Parameterization::Polynomial(read_set(lines, dim)?),
        "monotone" => {
            let order: usize = lines.parse(head.get(2).ok_or_else(|| lines.err("missing quadrature order"))?)?;
            let a = read_set(lines, dim)?;
            let b = read_set(lines, dim)?;
            Parameterization::IntegratedExponential(MonotoneParts::new(a, b, order)?)
        }
        "rbf" => {
            let count: usize = lines.parse(head.get(2).ok_or_else(|| lines.err("missing RBF count"))?)?;
            lines.keyword("centers")?;
            let mut centers = Vec::with_capacity(count);
            for _ in 0..count {
                let l = lines.next_line()?;
                centers.push(l.split_whitespace().map(|v| lines.parse(v)).collect::<Result<Vec<f64>>>()?);
            }
            lines.keyword("scales")?;
            let scales = lines.reals(count)?;
            Parameterization::LinearPlusRbf { centers, scales }
        }
        other => return Err(lines.err(format!("unknown component kind `{other}`"))),
    };
    let count: usize = match lines.keyword("coeffs")?.as_slice() {
        [c] => lines.parse(c)?,
        _ => return Err(lines.err("malformed coeffs line")),
    };
    let coeffs = lines.reals(count)?;
    MapComponent::new(k, param, coeffs)
}

fn read_set(lines: &mut Lines<'_>, dim: usize) -> Result<MultiIndexSet> {
    let head = lines.keyword("indexset")?;
    if head.len() != 4 {
        return Err(lines.err("indexset needs kind, component, degree and row count"));
    }
    let kind = IndexSetKind::parse(head[0])?;
    let component: usize = lines.parse(head[1])?;
    let degree: usize = lines.parse(head[2])?;
    let rows: usize = lines.parse(head[3])?;
    let mut indices = Vec::with_capacity(rows);
    for _ in 0..rows {
        let l = lines.next_line()?;
        let entries = l.split_whitespace().map(|v| lines.parse(v)).collect::<Result<Vec<usize>>>()?;
        indices.push(MultiIndex(entries));
    }
    MultiIndexSet::from_indices(kind, component, degree, dim, indices)
}

/// Extra header content for sample files.
#[derive(Debug, Clone, Default)]
pub struct SampleHeader {
    pub command: Option<String>,
    pub columns: Option<Vec<String>>,
    pub notes: Vec<String>,
}

pub fn write_samples<W: Write>(mut out: W, samples: &SampleSet, header: &SampleHeader) -> Result<()> {
    writeln!(out, "# trimap {}", env!("CARGO_PKG_VERSION"))?;
    if let Some(cmd) = &header.command {
        writeln!(out, "# command {cmd}")?;
    }
    writeln!(out, "# dim {}", samples.dim())?;
    writeln!(out, "# provenance {}", samples.provenance().as_str())?;
    match samples.seed() {
        Some(seed) => writeln!(out, "# seed {seed}")?,
        None => writeln!(out, "# seed none")?,
    }
    if let Some(cols) = &header.columns {
        writeln!(out, "# columns {}", cols.join(" "))?;
    }
    for note in &header.notes {
        writeln!(out, "# {note}")?;
    }
    let mut line = String::new();
    for row in samples.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v:.16e}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_samples(path: impl AsRef<Path>, samples: &SampleSet, header: &SampleHeader) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_samples(&mut w, samples, header)?;
    w.flush()?;
    Ok(())
}

pub fn read_samples<R: BufRead>(input: R) -> Result<SampleSet> {
    let mut dim: Option<usize> = None;
    let mut provenance = Provenance::Target;
    let mut seed = None;
    let mut points = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("dim"), Some(d)) => dim = d.parse().ok(),
                (Some("provenance"), Some(p)) => provenance = Provenance::parse(p)?,
                (Some("seed"), Some(s)) => seed = s.parse().ok(),
                _ => {}
            }
            continue;
        }
        let row = t
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|v| {
                v.parse::<f64>().map_err(|_| TrimapError::Parse {
                    line: i + 1,
                    message: format!("cannot parse `{v}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(TrimapError::Parse {
                    line: i + 1,
                    message: format!("expected {d} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        points.extend(row);
    }
    let set = SampleSet::new(dim.unwrap_or(0), points, provenance)?;
    Ok(match seed {
        Some(s) => set.with_seed(s),
        None => set,
    })
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    read_samples(BufReader::new(fs::File::open(path)?))
}
