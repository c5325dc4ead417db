//! Tab-separated annotation tables.
//!
//! One row per segment:
//!
//! ```text
//! video_id <TAB> segment_index <TAB> duration_units <TAB> s1,s2,...,sA
//! ```
//!
//! where the last column holds one score per annotator. Blank lines and
//! lines starting with `#` are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, DatasetHeader, FeatureDims, SegmentSample, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};

/// Declared score range of an annotation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationFormat {
    pub min_score: u8,
    pub max_score: u8,
}

impl Default for AnnotationFormat {
    fn default() -> Self {
        Self {
            min_score: MIN_SCORE,
            max_score: MAX_SCORE,
        }
    }
}

pub fn parse_annotations<R: BufRead>(r: R, source: &str, format: &AnnotationFormat) -> Result<Dataset> {
    if format.min_score > format.max_score || format.min_score < MIN_SCORE || format.max_score > MAX_SCORE {
        return Err(Error::Parameter(format!(
            "declared score range {}..{} must lie within {MIN_SCORE}..{MAX_SCORE}",
            format.min_score, format.max_score
        )));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut samples = Vec::new();
    let mut annotators: Option<usize> = None;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let video_id = cols[0].trim();
        if video_id.is_empty() {
            return Err(parse_err(lineno, "empty video_id".into()));
        }
        let segment_index: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad segment_index {:?}", cols[1])))?;
        let duration_units: u32 = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad duration_units {:?}", cols[2])))?;
        if duration_units == 0 {
            return Err(parse_err(lineno, "duration_units must be positive".into()));
        }
        let mut scores = Vec::new();
        for tok in cols[3].split(',') {
            let v: i64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad score {tok:?}")))?;
            if v < format.min_score as i64 || v > format.max_score as i64 {
                return Err(Error::Validation(format!(
                    "{source}:{lineno}: score {v} outside declared range {}..{}",
                    format.min_score, format.max_score
                )));
            }
            scores.push(v as u8);
        }
        match annotators {
            None => annotators = Some(scores.len()),
            Some(a) if a != scores.len() => {
                return Err(parse_err(
                    lineno,
                    format!("{} scores, earlier rows have {a}", scores.len()),
                ))
            }
            _ => {}
        }
        samples.push(SegmentSample {
            video_id: video_id.to_string(),
            segment_index,
            features: None,
            gold_scores: scores,
            duration_units,
        });
    }
    let annotators = annotators.ok_or_else(|| Error::Data(format!("{source}: no annotation rows")))?;
    let dims = FeatureDims {
        v: 0,
        t: 0,
        tr: 0,
        ge: 0,
        sd: 0,
    };
    Dataset::new(DatasetHeader::new(dims, 5, annotators), samples)
}

pub fn ingest_annotations(path: impl AsRef<Path>, format: &AnnotationFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(BufReader::new(f), &path.display().to_string(), format)
}

pub fn export_annotations<W: Write>(mut w: W, d: &Dataset) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<annotation stream>", e);
    for s in &d.samples {
        let scores: Vec<String> = s.gold_scores.iter().map(u8::to_string).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            s.video_id,
            s.segment_index,
            s.duration_units,
            scores.join(",")
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes an annotation table to `path`.
pub fn save_annotations(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    export_annotations(BufWriter::new(f), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, PlantedSpec};

    const TABLE: &str = "# two videos\n\
        a\t0\t1\t3,4\n\
        a\t1\t1\t1,2\n\
        a\t2\t2\t5,5\n\
        b\t0\t1\t2,2\n\
        b\t1\t1\t4,3\n\
        b\t2\t1\t1,1\n";

    #[test]
    fn structural_ingest() {
        let d = parse_annotations(TABLE.as_bytes(), "t", &AnnotationFormat::default()).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.samples.iter().all(|s| s.gold_scores.len() == 2 && s.features.is_none()));
        assert_eq!(d.videos().len(), 2);
        assert_eq!(d.samples[2].duration_units, 2);
    }

    #[test]
    fn out_of_range_score_rejected() {
        let bad = "a\t0\t1\t3,7\n";
        assert!(matches!(
            parse_annotations(bad.as_bytes(), "t", &AnnotationFormat::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let bad = "# header\na\t0\t1\t3,4\na\tx\t1\t3,4\n";
        match parse_annotations(bad.as_bytes(), "t", &AnnotationFormat::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "a\t0\t1\n";
        assert!(matches!(
            parse_annotations(short.as_bytes(), "t", &AnnotationFormat::default()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn export_then_ingest_preserves_scores() {
        let header = DatasetHeader::new(FeatureDims::default(), 5, 4);
        let spec = PlantedSpec {
            max_duration: 3,
            ..PlantedSpec::default()
        };
        let d = generate(&spec, &header, 3, 7, 2).unwrap();
        let mut buf = Vec::new();
        export_annotations(&mut buf, &d).unwrap();
        let back = parse_annotations(buf.as_slice(), "t", &AnnotationFormat::default()).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.samples.iter().zip(&d.samples) {
            assert_eq!(a.video_id, b.video_id);
            assert_eq!(a.segment_index, b.segment_index);
            assert_eq!(a.duration_units, b.duration_units);
            assert_eq!(a.gold_scores, b.gold_scores);
        }
    }
}
