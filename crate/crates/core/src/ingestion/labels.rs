//! Whitespace label files: one `class cx cy w h [confidence]` box per line.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateMode {
    /// Coordinates are fractions of the image width and height.
    #[default]
    Normalized,
    /// Coordinates are absolute pixels.
    Pixel,
}

/// Which line shape a file must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Five fields, no confidence.
    GroundTruth,
    /// Six fields, trailing confidence.
    Prediction,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: None,
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("{what} {tok:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} {tok:?} is not finite")));
    }
    Ok(v)
}

/// Parses label text into pixel-space boxes. Lines with five fields are
/// ground truth, six fields carry a confidence. Blank lines and `#` comments
/// are skipped. Line numbers in errors are 1-based.
pub fn parse_label_file(content: &str, mode: CoordinateMode, dims: (u32, u32)) -> Result<Vec<BBox>> {
    let (width, height) = (dims.0 as f64, dims.1 as f64);
    let mut boxes = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(parse_err(
                line_no,
                format!("expected 5 or 6 fields, found {}", fields.len()),
            ));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("class id {:?} is not a non-negative integer", fields[0])))?;
        let mut cx = parse_f64(fields[1], "cx", line_no)?;
        let mut cy = parse_f64(fields[2], "cy", line_no)?;
        let mut w = parse_f64(fields[3], "w", line_no)?;
        let mut h = parse_f64(fields[4], "h", line_no)?;
        if w <= 0.0 || h <= 0.0 {
            return Err(parse_err(line_no, format!("box size must be positive (w={w}, h={h})")));
        }
        let confidence = match fields.get(5) {
            Some(tok) => {
                let c = parse_f64(tok, "confidence", line_no)?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(parse_err(line_no, format!("confidence {c} outside [0, 1]")));
                }
                Some(c)
            }
            None => None,
        };
        if mode == CoordinateMode::Normalized {
            cx *= width;
            w *= width;
            cy *= height;
            h *= height;
        }
        let b = BBox {
            cx,
            cy,
            w,
            h,
            confidence,
            class_id,
        };
        b.validate().map_err(|e| parse_err(line_no, e.to_string()))?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// Like [`parse_label_file`] but requires every line to be of `kind`.
pub fn parse_labels_of_kind(
    content: &str,
    mode: CoordinateMode,
    dims: (u32, u32),
    kind: LabelKind,
) -> Result<Vec<BBox>> {
    let boxes = parse_label_file(content, mode, dims)?;
    // Map each box back to its source line for located errors.
    let lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, _)| i + 1);
    for (b, line) in boxes.iter().zip(lines) {
        match (kind, b.confidence) {
            (LabelKind::GroundTruth, Some(_)) => {
                return Err(parse_err(line, "ground-truth labels must not carry a confidence"))
            }
            (LabelKind::Prediction, None) => return Err(parse_err(line, "predictions must carry a confidence")),
            _ => {}
        }
    }
    Ok(boxes)
}

/// Serializes boxes in the label format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn serialize_labels(boxes: &[BBox], mode: CoordinateMode, dims: (u32, u32)) -> String {
    let (width, height) = (dims.0 as f64, dims.1 as f64);
    let mut out = String::new();
    for b in boxes {
        let (cx, cy, w, h) = match mode {
            CoordinateMode::Pixel => (b.cx, b.cy, b.w, b.h),
            CoordinateMode::Normalized => (b.cx / width, b.cy / height, b.w / width, b.h / height),
        };
        let _ = write!(out, "{} {cx:?} {cy:?} {w:?} {h:?}", b.class_id);
        if let Some(c) = b.confidence {
            let _ = write!(out, " {c:?}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_comments() {
        assert!(parse_label_file("", CoordinateMode::Pixel, (10, 10)).unwrap().is_empty());
        let text = "# header\n\n   \n0 5 5 2 2\n";
        assert_eq!(parse_label_file(text, CoordinateMode::Pixel, (10, 10)).unwrap().len(), 1);
    }

    #[test]
    fn normalized_conversion() {
        let b = parse_label_file("0 0.5 0.5 0.2 0.2", CoordinateMode::Normalized, (100, 100)).unwrap();
        assert_eq!(b, vec![BBox::new(50.0, 50.0, 20.0, 20.0).unwrap()]);
        let b = parse_label_file("3 0.25 0.5 0.1 0.2 0.75", CoordinateMode::Normalized, (200, 50)).unwrap();
        assert_eq!((b[0].cx, b[0].cy, b[0].w, b[0].h), (50.0, 25.0, 20.0, 10.0));
        assert_eq!((b[0].class_id, b[0].confidence), (3, Some(0.75)));
    }

    #[test]
    fn located_errors() {
        let cases = [
            ("0 0.5 0.5 0 0.2", 1),
            ("0 1 1 1 1\n0 1 1 1", 2),
            ("0 1 1 1 1\n\n0 1 x 1 1", 3),
            ("0 1 1 1 1 1.5", 1),
            ("-1 1 1 1 1", 1),
            ("0 nan 1 1 1", 1),
            ("0 1 1 1 1 0.5 7", 1),
        ];
        for (text, line) in cases {
            match parse_label_file(text, CoordinateMode::Normalized, (100, 100)) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn kind_enforcement() {
        let gt = "0 1 1 1 1\n# c\n0 2 2 1 1 0.5\n";
        match parse_labels_of_kind(gt, CoordinateMode::Pixel, (9, 9), LabelKind::GroundTruth) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_labels_of_kind("0 1 1 1 1", CoordinateMode::Pixel, (9, 9), LabelKind::Prediction).is_err());
        assert!(parse_labels_of_kind("0 1 1 1 1 0.1", CoordinateMode::Pixel, (9, 9), LabelKind::Prediction).is_ok());
    }

    #[test]
    fn serialize_pixel_exact() {
        let boxes = vec![
            BBox::new(12.345678901234, 0.1, 3.0, 1e-3).unwrap(),
            BBox::new(1.0, 2.0, 3.0, 4.0).unwrap().with_confidence(0.3).unwrap().with_class(2),
        ];
        let text = serialize_labels(&boxes, CoordinateMode::Pixel, (640, 480));
        assert_eq!(parse_label_file(&text, CoordinateMode::Pixel, (640, 480)).unwrap(), boxes);
    }
}
