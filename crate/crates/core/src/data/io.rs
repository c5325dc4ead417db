//! Dataset file: one JSON header line followed by one JSON sample per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, DatasetHeader, SegmentSample};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(mut w: W, d: &Dataset) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<dataset stream>", e);
    let line = serde_json::to_string(&d.header).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(w, "{line}").map_err(io)?;
    for s in &d.samples {
        let line = serde_json::to_string(s).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset<R: BufRead>(r: R, source: &str) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut lines = r.lines().enumerate();
    let header: DatasetHeader = loop {
        let Some((i, line)) = lines.next() else {
            return Err(parse_err(1, "missing header line".into()));
        };
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, format!("header: {e}")))?;
    };
    if header.format_version != DATASET_VERSION {
        return Err(parse_err(
            1,
            format!(
                "format_version {} unsupported (expected {DATASET_VERSION})",
                header.format_version
            ),
        ));
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SegmentSample =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        header
            .validate_sample(&s)
            .map_err(|e| parse_err(i + 1, e.to_string()))?;
        samples.push(s);
    }
    Ok(Dataset { header, samples })
}

pub fn save_dataset(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(BufWriter::new(f), d)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, FeatureDims, PlantedSpec};

    #[test]
    fn round_trip_preserves_every_value() {
        let header = DatasetHeader::new(FeatureDims::default(), 5, 2);
        let d = generate(&PlantedSpec::default(), &header, 2, 5, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d).unwrap();
        let back = read_dataset(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn reports_line_of_bad_record() {
        let header = DatasetHeader::new(FeatureDims::default(), 5, 1);
        let d = generate(&PlantedSpec::default(), &header, 1, 2, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"video_id\": 3}\n");
        match read_dataset(text.as_bytes(), "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let text = "{\"format_version\":7,\"dims\":{\"v\":1,\"t\":0,\"tr\":0,\"ge\":0,\"sd\":0},\"num_classes\":5,\"annotators_per_segment\":1}\n";
        assert!(matches!(read_dataset(text.as_bytes(), "mem"), Err(Error::Parse { .. })));
    }
}
