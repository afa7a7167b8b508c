use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::domain::{Band, Domain, Modulation, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Feature rows with class labels from one channel domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub domain: Domain,
    pub band: Option<Band>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Matrix,
        labels: Vec<usize>,
        domain: Domain,
        band: Option<Band>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(
                "Dataset",
                format!("{} rows but {} labels", features.rows(), labels.len()),
            ));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape(
                "Dataset",
                format!(
                    "{} columns but {} feature names",
                    features.cols(),
                    feature_names.len()
                ),
            ));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= NUM_CLASSES) {
            return Err(Error::invalid(format!(
                "label {l} at row {i} outside [0, {NUM_CLASSES})"
            )));
        }
        if let Some(pos) = features.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / features.cols().max(1),
                column: pos % features.cols().max(1),
                detail: "non-finite value".into(),
            });
        }
        Ok(Dataset {
            feature_names,
            features,
            labels,
            domain,
            band,
        })
    }

    /// Dataset with generated `f0, f1, …` feature names.
    pub fn unnamed(features: Matrix, labels: Vec<usize>, domain: Domain) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("f{j}")).collect();
        Self::new(names, features, labels, domain, None)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain,
            band: self.band,
        }
    }

    pub fn with_features(&self, features: Matrix) -> Result<Dataset> {
        Dataset::new(
            self.feature_names.clone(),
            features,
            self.labels.clone(),
            self.domain,
            self.band,
        )
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of each class, in row order.
    pub fn class_indices(&self) -> [Vec<usize>; NUM_CLASSES] {
        let mut out: [Vec<usize>; NUM_CLASSES] = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for (row, &label) in self.features.row_iter().zip(&self.labels) {
            rec.clear();
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(Modulation::ALL[label].name().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// How to interpret a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Label column name; when absent from the header the last column is used.
    pub label_column: String,
    pub domain: Domain,
    pub band: Option<Band>,
}

impl CsvOptions {
    pub fn new(domain: Domain) -> Self {
        CsvOptions {
            label_column: "label".into(),
            domain,
            band: None,
        }
    }

    pub fn band(mut self, band: Band) -> Self {
        self.band = Some(band);
        self
    }
}

/// Parses a numeric cell. Complex forms (`a+bi`, `a-bj`, `bi`, `(a+bj)`)
/// become their modulus; plain reals pass through unchanged.
pub fn parse_cell(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let s = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(s)
        .trim();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix(['i', 'j', 'I', 'J']) else {
        return s.parse::<f64>().ok();
    };
    let bytes = body.as_bytes();
    // Split at the last sign that is not the leading sign or part of an exponent.
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let parse_imag = |t: &str| -> Option<f64> {
        match t.trim() {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            other => other.parse::<f64>().ok(),
        }
    };
    let (re, im) = match split {
        Some(k) => (body[..k].trim().parse::<f64>().ok()?, parse_imag(&body[k..])?),
        None => (0.0, parse_imag(body)?),
    };
    Some(re.hypot(im))
}

pub fn read_csv<R: Read>(input: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::invalid(
            "dataset CSV needs at least one feature column and a label column",
        ));
    }
    let label_col = header
        .iter()
        .position(|h| h == &opts.label_column)
        .unwrap_or(header.len() - 1);
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Data rows are numbered from 1, after the header.
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(header.len()),
                detail: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_col {
                let label: Modulation = cell.parse().map_err(|_| Error::UnknownLabel {
                    label: cell.to_string(),
                    row,
                    valid: Modulation::valid_names(),
                })?;
                labels.push(label.index());
                continue;
            }
            match parse_cell(cell) {
                Some(v) if v.is_finite() => data.push(v),
                Some(_) => {
                    return Err(Error::Parse {
                        row,
                        column: j,
                        detail: format!("non-finite value {cell:?}"),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        row,
                        column: j,
                        detail: format!("cannot parse {cell:?} as a real or complex number"),
                    })
                }
            }
        }
    }
    let features = Matrix::from_vec(labels.len(), feature_names.len(), data)?;
    Dataset::new(feature_names, features, labels, opts.domain, opts.band)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(std::io::BufReader::new(f), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_cells_become_moduli() {
        assert_eq!(parse_cell("3+4i"), Some(5.0));
        assert_eq!(parse_cell("3-4j"), Some(5.0));
        assert_eq!(parse_cell("-2.5"), Some(-2.5));
        assert_eq!(parse_cell("2i"), Some(2.0));
        assert_eq!(parse_cell("-2j"), Some(2.0));
        assert_eq!(parse_cell("(3+4j)"), Some(5.0));
        assert_eq!(parse_cell("1e-3+0i"), Some(1e-3));
        assert_eq!(parse_cell("3e+2-4e+2i"), Some(500.0));
        assert_eq!(parse_cell("+i"), Some(1.0));
        assert_eq!(parse_cell("abc"), None);
        assert_eq!(parse_cell(""), None);
    }

    #[test]
    fn reads_labels_and_complex_cells() {
        let text = "a,b,label\n3+4i,-2.5,BPSK\n1,2,QPSK\n0,0,16QAM\n0,1,64QAM\n1,1,256QAM\n";
        let ds = read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rician)).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(ds.features.row(0), &[5.0, -2.5]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.domain, Domain::Rician);
    }

    #[test]
    fn label_column_defaults_to_last() {
        let text = "x,y,Modulation\n1,2,QPSK\n";
        let ds = read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rayleigh)).unwrap();
        assert_eq!(ds.labels, vec![1]);
        let text = "label,x\nQPSK,7\n";
        let ds = read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rayleigh)).unwrap();
        assert_eq!(ds.features.row(0), &[7.0]);
    }

    #[test]
    fn errors_carry_coordinates() {
        let text = "a,b,label\n1,2,BPSK\n1,oops,BPSK\n";
        match read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rayleigh)) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 1)),
            other => panic!("{other:?}"),
        }
        let text = "a,label\n1,8PSK\n";
        match read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rayleigh)) {
            Err(Error::UnknownLabel { label, valid, .. }) => {
                assert_eq!(label, "8PSK");
                assert!(valid.contains("256QAM"));
            }
            other => panic!("{other:?}"),
        }
        let text = "a,label\nNaN,BPSK\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvOptions::new(Domain::Rayleigh)),
            Err(Error::Parse { row: 1, column: 0, .. })
        ));
    }

    #[test]
    fn export_reload_round_trip() {
        let features =
            Matrix::from_vec(2, 2, vec![0.1, 1.0 / 3.0, -2.5e-300, 12345.678]).unwrap();
        let ds = Dataset::unnamed(features, vec![4, 0], Domain::Rayleigh).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvOptions::new(Domain::Rayleigh)).unwrap();
        assert_eq!(back, ds);
    }
}
