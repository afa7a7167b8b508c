//! Plot-ready exports of a 2-D embedding: a CSV table and a standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, Modulation, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Embedded points with the class and domain of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub domains: Vec<Domain>,
    pub kl_trace: Vec<f64>,
}

impl Embedding2D {
    pub fn new(points: Matrix, labels: Vec<usize>, domains: Vec<Domain>, kl_trace: Vec<f64>) -> Result<Self> {
        let n = points.rows();
        if points.cols() != 2 || labels.len() != n || domains.len() != n {
            return Err(Error::shape(
                "Embedding2D",
                format!(
                    "{:?} points, {} labels, {} domains",
                    points.shape(),
                    labels.len(),
                    domains.len()
                ),
            ));
        }
        if !points.is_finite() {
            return Err(Error::invalid("embedding has non-finite coordinates"));
        }
        Ok(Embedding2D {
            points,
            labels,
            domains,
            kl_trace,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn non_empty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("refusing to export an empty embedding"));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.non_empty()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "class", "domain"])?;
        for i in 0..self.len() {
            let p = self.points.row(i);
            w.write_record([
                p[0].to_string(),
                p[1].to_string(),
                Modulation::ALL[self.labels[i]].name().to_string(),
                self.domains[i].name().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self, title: &str) -> Result<String> {
        self.non_empty()?;
        render_svg(self, title)
    }
}

pub fn export_plot_data(embedding: &Embedding2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    embedding.write_csv(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::file(path, e))
}

pub fn render_scatter(embedding: &Embedding2D, title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = embedding.to_svg(title)?;
    fs::write(path, svg).map_err(|e| Error::file(path, e))
}

const PALETTE: [&str; NUM_CLASSES] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 560.0;
const PLOT: f64 = 480.0;
const MARGIN: f64 = 40.0;

fn marker(domain: Domain, x: f64, y: f64, color: &str) -> String {
    match domain {
        Domain::Rayleigh => {
            format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.75"/>"#)
        }
        Domain::Rician => format!(
            r#"<path d="M{:.2},{:.2}l3.5,6h-7z" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            x,
            y - 3.5
        ),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_svg(e: &Embedding2D, title: &str) -> Result<String> {
    let xs: Vec<f64> = (0..e.len()).map(|i| e.points.get(i, 0)).collect();
    let ys: Vec<f64> = (0..e.len()).map(|i| e.points.get(i, 1)).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let (x0, xw) = range(&xs);
    let (y0, yw) = range(&ys);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN + PLOT / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="#888"/>"##
    );
    for i in 0..e.len() {
        let px = MARGIN + 8.0 + (xs[i] - x0) / xw * (PLOT - 16.0);
        let py = MARGIN + PLOT - 8.0 - (ys[i] - y0) / yw * (PLOT - 16.0);
        let _ = writeln!(s, "{}", marker(e.domains[i], px, py, PALETTE[e.labels[i]]));
    }

    let lx = MARGIN + PLOT + 30.0;
    let mut ly = MARGIN + 10.0;
    let _ = writeln!(s, r#"<text x="{lx}" y="{ly}" font-weight="bold">Class</text>"#);
    for (c, m) in Modulation::ALL.iter().enumerate() {
        ly += 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{ly}">{}</text>"#,
            ly - 9.0,
            PALETTE[c],
            lx + 16.0,
            m.display_name()
        );
    }
    ly += 34.0;
    let _ = writeln!(s, r#"<text x="{lx}" y="{ly}" font-weight="bold">Domain</text>"#);
    for d in [Domain::Rayleigh, Domain::Rician] {
        ly += 20.0;
        let _ = writeln!(
            s,
            r#"{}<text x="{}" y="{ly}">{}</text>"#,
            marker(d, lx + 5.0, ly - 4.0, "#333"),
            lx + 16.0,
            d.title()
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Seeded subsample keeping at most `per_group` rows of every
/// (class, domain) pair, returned in ascending row order.
pub fn stratified_subsample(
    labels: &[usize],
    domains: &[Domain],
    per_group: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(52);
    let mut picked = Vec::new();
    for domain in [Domain::Rayleigh, Domain::Rician] {
        for class in 0..NUM_CLASSES {
            let mut group: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == class && domains[i] == domain)
                .collect();
            group.shuffle(&mut rng);
            group.truncate(per_group);
            picked.extend(group);
        }
    }
    picked.sort_unstable();
    picked
}
