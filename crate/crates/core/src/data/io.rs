//! CSV file formats.
//!
//! Manifest and feature files may start with a metadata line
//! `# classes=<c> names=<n0>|<n1>|...`; without it the class count is
//! one more than the largest label present. Unknown labels are `-1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;

use super::{Manifest, SampleRecord};
use crate::error::{io_err, Error, Result};
use crate::features::GrayImage;
use crate::linalg::Matrix;

pub const UNKNOWN_LABEL: i64 = -1;

const MANIFEST_HEADER: [&str; 5] = ["id", "path", "label", "domain", "view"];
const FEATURE_PREFIX: [&str; 4] = ["id", "label", "domain", "view"];
const PREDICTION_HEADER: [&str; 3] = ["sample_id", "predicted_class", "true_class"];

struct ClassMeta {
    count: Option<usize>,
    names: Vec<String>,
}

/// Splits off the optional metadata line. Returns the metadata, the rest of
/// the text, and how many lines were consumed.
fn split_meta<'a>(text: &'a str, path: &str) -> Result<(ClassMeta, &'a str, usize)> {
    let mut meta = ClassMeta {
        count: None,
        names: Vec::new(),
    };
    let Some(rest) = text.strip_prefix('#') else {
        return Ok((meta, text, 0));
    };
    let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
    for token in line.split_whitespace() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_string(),
            line: 1,
            message,
        };
        match token.split_once('=') {
            Some(("classes", v)) => {
                meta.count = Some(v.parse().map_err(|_| parse_err(format!("bad class count {v:?}")))?);
            }
            Some(("names", v)) => meta.names = v.split('|').map(str::to_string).collect(),
            _ => return Err(parse_err(format!("unrecognized metadata {token:?}"))),
        }
    }
    Ok((meta, body, 1))
}

fn meta_line(manifest: &Manifest) -> String {
    format!(
        "# classes={} names={}\n",
        manifest.class_count(),
        manifest.class_names().join("|")
    )
}

fn parse_label(field: &str) -> std::result::Result<Option<usize>, String> {
    let v: i64 = field.trim().parse().map_err(|_| format!("bad label {field:?}"))?;
    match v {
        UNKNOWN_LABEL => Ok(None),
        v if v >= 0 => Ok(Some(v as usize)),
        v => Err(format!("label {v} is neither a class index nor -1")),
    }
}

fn label_field(label: Option<usize>) -> String {
    label.map_or(UNKNOWN_LABEL.to_string(), |l| l.to_string())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Shared reader loop: checks the header, then hands each record and its
/// 1-based file line number to `row`.
pub(crate) fn read_rows(
    body: &str,
    path: &str,
    line_offset: usize,
    header_ok: impl Fn(&csv::StringRecord) -> std::result::Result<(), String>,
    mut row: impl FnMut(&csv::StringRecord, usize) -> std::result::Result<(), String>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| err(line_offset + 1, e.to_string()))?
        .clone();
    header_ok(&header).map_err(|m| err(line_offset + 1, m))?;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + line_offset;
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + line_offset;
        if rec.len() != header.len() {
            return Err(err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        row(&rec, line).map_err(|m| err(line, m))?;
    }
    Ok(())
}

fn expect_header(header: &csv::StringRecord, want: &[&str]) -> std::result::Result<(), String> {
    let got: Vec<&str> = header.iter().collect();
    if got.len() < want.len() || got[..want.len()] != *want {
        return Err(format!("expected header starting {want:?}, found {got:?}"));
    }
    Ok(())
}

fn finish_manifest(records: Vec<SampleRecord>, meta: ClassMeta) -> Result<Manifest> {
    let count = meta.count.unwrap_or_else(|| {
        records
            .iter()
            .filter_map(|r| r.label)
            .max()
            .map_or(0, |m| m + 1)
    });
    Manifest::new(records, count, meta.names)
}

pub fn parse_manifest(text: &str, path: &str) -> Result<Manifest> {
    let (meta, body, offset) = split_meta(text, path)?;
    let mut records = Vec::new();
    read_rows(
        body,
        path,
        offset,
        |h| {
            expect_header(h, &MANIFEST_HEADER)?;
            if h.len() != MANIFEST_HEADER.len() {
                return Err(format!("manifest has {} columns, expected 5", h.len()));
            }
            Ok(())
        },
        |rec, _| {
            records.push(SampleRecord {
                id: rec[0].to_string(),
                path: rec[1].to_string(),
                label: parse_label(&rec[2])?,
                domain: rec[3].parse()?,
                view: rec[4].trim().parse().map_err(|_| format!("bad view {:?}", &rec[4]))?,
            });
            Ok(())
        },
    )?;
    finish_manifest(records, meta)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    parse_manifest(&read_text(path)?, &path.display().to_string())
}

fn csv_line(fields: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

pub fn manifest_to_csv(manifest: &Manifest) -> String {
    let mut out = meta_line(manifest);
    out.push_str(&csv_line(&MANIFEST_HEADER));
    for r in manifest.records() {
        out.push_str(&csv_line(&[
            &r.id,
            &r.path,
            &label_field(r.label),
            &r.domain.to_string(),
            &r.view.to_string(),
        ]));
    }
    out
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &manifest_to_csv(manifest))
}

/// Parses `id,label,domain,view,f0,...,f{D-1}`; rows become matrix rows.
pub fn parse_feature_csv(text: &str, path: &str) -> Result<(Matrix, Manifest)> {
    let (meta, body, offset) = split_meta(text, path)?;
    let mut records = Vec::new();
    let mut values = Vec::new();
    let mut dim = 0;
    read_rows(
        body,
        path,
        offset,
        |h| {
            expect_header(h, &FEATURE_PREFIX)?;
            for (k, name) in h.iter().skip(FEATURE_PREFIX.len()).enumerate() {
                if name != format!("f{k}") {
                    return Err(format!("feature column {k} is named {name:?}"));
                }
            }
            Ok(())
        },
        |rec, _| {
            dim = rec.len() - FEATURE_PREFIX.len();
            records.push(SampleRecord {
                id: rec[0].to_string(),
                path: String::new(),
                label: parse_label(&rec[1])?,
                domain: rec[2].parse()?,
                view: rec[3].trim().parse().map_err(|_| format!("bad view {:?}", &rec[3]))?,
            });
            for (k, field) in rec.iter().skip(FEATURE_PREFIX.len()).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| format!("bad value {field:?} in f{k}"))?;
                if !v.is_finite() {
                    return Err(format!("non-finite value in f{k}"));
                }
                values.push(v);
            }
            Ok(())
        },
    )?;
    let header_dim = {
        let first = body.lines().next().unwrap_or("");
        first.split(',').count().saturating_sub(FEATURE_PREFIX.len())
    };
    if records.is_empty() {
        dim = header_dim;
    }
    let matrix = Matrix::from_vec(records.len(), dim, values)?;
    Ok((matrix, finish_manifest(records, meta)?))
}

pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<(Matrix, Manifest)> {
    let path = path.as_ref();
    parse_feature_csv(&read_text(path)?, &path.display().to_string())
}

pub fn feature_csv_string(manifest: &Manifest, features: &Matrix) -> Result<String> {
    if features.rows() != manifest.len() {
        return Err(Error::Validation(format!(
            "{} feature rows for {} samples",
            features.rows(),
            manifest.len()
        )));
    }
    let mut out = meta_line(manifest);
    let mut header: Vec<String> = FEATURE_PREFIX.iter().map(|s| s.to_string()).collect();
    header.extend((0..features.cols()).map(|k| format!("f{k}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, r) in manifest.records().iter().enumerate() {
        out.push_str(csv_line(&[&r.id]).trim_end());
        let _ = write!(out, ",{},{},{}", label_field(r.label), r.domain, r.view);
        for v in features.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_feature_csv(manifest: &Manifest, features: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &feature_csv_string(manifest, features)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub sample_id: String,
    pub predicted_class: usize,
    pub true_class: Option<usize>,
}

pub fn predictions_to_csv(rows: &[PredictionRow]) -> String {
    let mut out = csv_line(&PREDICTION_HEADER);
    for r in rows {
        out.push_str(&csv_line(&[
            &r.sample_id,
            &r.predicted_class.to_string(),
            &label_field(r.true_class),
        ]));
    }
    out
}

pub fn write_predictions(rows: &[PredictionRow], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &predictions_to_csv(rows))
}

pub fn parse_predictions(text: &str, path: &str) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    read_rows(
        text,
        path,
        0,
        |h| expect_header(h, &PREDICTION_HEADER),
        |rec, _| {
            let predicted_class = parse_label(&rec[1])?.ok_or("predicted class may not be -1")?;
            rows.push(PredictionRow {
                sample_id: rec[0].to_string(),
                predicted_class,
                true_class: parse_label(&rec[2])?,
            });
            Ok(())
        },
    )?;
    Ok(rows)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    parse_predictions(&read_text(path)?, &path.display().to_string())
}

/// Reads an 8-bit grayscale PGM (any PNM the decoder accepts is converted to luma).
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    GrayImage::new(w as usize, h as usize, luma.into_raw())
}

/// Writes a binary (P5) PGM.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(img.pixels(), img.width() as u32, img.height() as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;
    use proptest::prelude::*;

    #[test]
    fn empty_manifest_takes_class_count_from_header() {
        let m = parse_manifest("# classes=4 names=AN|DI|HA|SU\nid,path,label,domain,view\n", "m.csv").unwrap();
        assert!(m.is_empty());
        assert_eq!(m.class_count(), 4);
        assert_eq!(m.class_names()[1], "DI");
    }

    #[test]
    fn three_row_feature_fixture() {
        let text = "id,label,domain,view,f0,f1\n\
                    a,0,source,0,1.5,-2\n\
                    b,2,source,1,0,3.25\n\
                    c,-1,target,0,1e-3,4\n";
        let (x, m) = parse_feature_csv(text, "f.csv").unwrap();
        assert_eq!(x.shape(), (3, 2));
        assert_eq!(x.row(0), &[1.5, -2.0]);
        assert_eq!(x.row(1), &[0.0, 3.25]);
        assert_eq!(x.row(2), &[0.001, 4.0]);
        assert_eq!(m.class_count(), 3);
        assert_eq!(m.labels(), vec![Some(0), Some(2), None]);
        assert_eq!(m.records()[1].view, 1);
        assert_eq!(m.records()[2].domain, Domain::Target);
        assert!(m.known_labels().is_none());
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = "# classes=2\nid,path,label,domain,view\na,x.pgm,0,source,0\nb,y.pgm,zero,source,0\n";
        match parse_manifest(text, "m.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "id,label,domain,view,f0\na,0,source,0,1\nb,0,source,0\n";
        match parse_feature_csv(text, "f.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let dup = "id,path,label,domain,view\na,,0,source,0\na,,1,source,0\n";
        assert!(matches!(parse_manifest(dup, "m"), Err(Error::Validation(_))));
        let unlabeled_source = "id,path,label,domain,view\na,,-1,source,0\n";
        assert!(matches!(parse_manifest(unlabeled_source, "m"), Err(Error::Validation(_))));
        let out_of_range = "# classes=2\nid,path,label,domain,view\na,,2,source,0\n";
        assert!(matches!(parse_manifest(out_of_range, "m"), Err(Error::Validation(_))));
        let bad_domain = "id,path,label,domain,view\na,,0,elsewhere,0\n";
        assert!(matches!(parse_manifest(bad_domain, "m"), Err(Error::Parse { .. })));
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![
            PredictionRow {
                sample_id: "t1".into(),
                predicted_class: 2,
                true_class: Some(1),
            },
            PredictionRow {
                sample_id: "t,2".into(),
                predicted_class: 0,
                true_class: None,
            },
        ];
        let text = predictions_to_csv(&rows);
        assert!(text.starts_with("sample_id,predicted_class,true_class\nt1,2,1\n\"t,2\",0,-1\n"));
        assert_eq!(parse_predictions(&text, "p").unwrap(), rows);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::new(5, 3, (0..15).map(|v| (v * 17) as u8).collect()).unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    fn arb_record() -> impl Strategy<Value = (String, Option<usize>, bool, u32, Vec<f64>)> {
        (
            "[a-z][a-z0-9_,]{0,6}",
            prop::option::of(0usize..5),
            any::<bool>(),
            0u32..4,
            prop::collection::vec(-1e6f64..1e6, 3),
        )
    }

    proptest! {
        #[test]
        fn manifest_and_features_round_trip(rows in prop::collection::vec(arb_record(), 0..12)) {
            let mut seen = std::collections::HashSet::new();
            let mut records = Vec::new();
            let mut values = Vec::new();
            for (i, (id, label, is_source, view, feats)) in rows.into_iter().enumerate() {
                let id = format!("{id}{i}");
                if !seen.insert(id.clone()) { continue; }
                let domain = if is_source && label.is_some() { Domain::Source } else { Domain::Target };
                records.push(SampleRecord { id, path: format!("img/{i}.pgm"), label, domain, view });
                values.extend(feats);
            }
            let n = records.len();
            let m = Manifest::new(records, 5, vec![]).unwrap();
            let back = parse_manifest(&manifest_to_csv(&m), "m").unwrap();
            prop_assert_eq!(&back, &m);

            let x = Matrix::from_vec(n, 3, values).unwrap();
            let (x2, m2) = parse_feature_csv(&feature_csv_string(&m, &x).unwrap(), "f").unwrap();
            prop_assert_eq!(x2, x);
            prop_assert_eq!(m2.ids(), m.ids());
            prop_assert_eq!(m2.labels(), m.labels());
        }
    }
}
