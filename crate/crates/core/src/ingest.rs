//! Source adapters and normalization into the unified schema.
//!
//! Built-in adapter layouts:
//!
//! * `flat-list`: JSONL, `{"id", "image", "width", "height", "instruction",
//!   "coords": [..2 or 4 numbers..], "scale": "normalized" | "pixel"}`.
//!   `scale` defaults to `normalized`.
//! * `tagged`: JSONL, same fields but the annotation is a tag-wrapped string
//!   in `"answer"`, e.g. `"<box>10,20,30,40</box>"` or `"<point>5 7</point>"`.
//!   `scale` defaults to `pixel`.
//! * `csv-pixel`: CSV with header `id,image,width,height,instruction,c1,c2[,c3,c4]`,
//!   pixel coordinates.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::schema::{quantize_3dp, Annotation, DatasetManifest, GroundingSample};
use crate::{Error, Point, Rect, Result};

/// Slack allowed outside `[0, 1]` before a coordinate is rejected.
pub const RANGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateScale {
    #[serde(alias = "normalized01")]
    Normalized,
    Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawAnnotation {
    List(Vec<f64>),
    Tagged(String),
    PixelTuple(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub id: String,
    pub image_ref: String,
    pub raw_instruction: String,
    pub raw_annotation: RawAnnotation,
    pub coordinate_scale: CoordinateScale,
    pub image_size: Option<(u32, u32)>,
    pub source_id: String,
}

/// Tag name and numbers found in a `<tag>...</tag>` string.
pub fn parse_tagged(s: &str) -> Result<(String, Vec<f64>)> {
    let perr = |offset: usize, msg: &str| Error::Parse {
        offset,
        msg: msg.to_string(),
    };
    let open = s.find('<').ok_or_else(|| perr(0, "missing opening tag"))?;
    let name_end = s[open..]
        .find('>')
        .map(|i| open + i)
        .ok_or_else(|| perr(open, "unterminated opening tag"))?;
    let name = &s[open + 1..name_end];
    if name.is_empty() || name.starts_with('/') {
        return Err(perr(open, "expected an opening tag"));
    }
    let body_start = name_end + 1;
    let close = format!("</{name}>");
    let body_end = s[body_start..]
        .find(&close)
        .map(|i| body_start + i)
        .ok_or_else(|| perr(s.len(), &format!("missing closing tag {close}")))?;
    if let Some(i) = s[body_start..body_end].find('<') {
        return Err(perr(body_start + i, "nested or unbalanced tag"));
    }
    let tail = &s[body_end + close.len()..];
    if let Some(i) = tail.find(|c: char| !c.is_whitespace()) {
        return Err(perr(body_end + close.len() + i, "unexpected content after closing tag"));
    }

    let body = &s[body_start..body_end];
    let mut nums = Vec::new();
    let mut pos = 0;
    // pair-wrapped forms such as `(x0,y0),(x1,y1)` are accepted
    for tok in body.split(|c: char| matches!(c, ',' | '(' | ')' | '[' | ']') || c.is_whitespace()) {
        let offset = body_start + pos;
        pos += tok.len() + 1;
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok
            .parse()
            .map_err(|_| perr(offset, &format!("non-numeric token `{tok}`")))?;
        nums.push(v);
    }
    Ok((name.to_string(), nums))
}

/// Extracts the four numbers of a `<box>x0,y0,x1,y1</box>` string, unscaled.
pub fn parse_tagged_box(s: &str) -> Result<[f64; 4]> {
    let (_, nums) = parse_tagged(s)?;
    nums.as_slice().try_into().map_err(|_| Error::Parse {
        offset: 0,
        msg: format!("expected 4 numbers, found {}", nums.len()),
    })
}

/// Converts raw coordinates to a quantized normalized annotation.
///
/// Pixel coordinates alternate x/y and are divided by width/height. Values
/// within [`RANGE_TOLERANCE`] of the unit interval are clamped; anything
/// further out rejects the sample.
pub fn normalize_coords(
    raw: &[f64],
    scale: CoordinateScale,
    image_size: Option<(u32, u32)>,
) -> Result<Annotation> {
    if raw.len() != 2 && raw.len() != 4 {
        return Err(Error::Arity(raw.len()));
    }
    let divisors = match scale {
        CoordinateScale::Normalized => (1.0, 1.0),
        CoordinateScale::Pixel => match image_size {
            Some((w, h)) if w > 0 && h > 0 => (w as f64, h as f64),
            _ => {
                return Err(Error::Validation(
                    "pixel-space coordinates need a positive image size".into(),
                ))
            }
        },
    };
    let mut v = Vec::with_capacity(raw.len());
    for (i, &r) in raw.iter().enumerate() {
        let d = if i % 2 == 0 { divisors.0 } else { divisors.1 };
        let n = r / d;
        let n = if (-RANGE_TOLERANCE..0.0).contains(&n) {
            0.0
        } else if n > 1.0 && n <= 1.0 + RANGE_TOLERANCE {
            1.0
        } else if (0.0..=1.0).contains(&n) {
            n
        } else {
            return Err(Error::OutOfBounds { value: n });
        };
        v.push(quantize_3dp(n)?);
    }
    Ok(match v.as_slice() {
        [x, y] => Annotation::Point(Point::new(*x, *y)?),
        [ax, ay, bx, by] => Annotation::Box(Rect::from_corners(*ax, *ay, *bx, *by)?),
        _ => unreachable!("arity checked above"),
    })
}

/// Turns a parsed source record into a unified sample. The task kind follows
/// from the annotation arity: 4 numbers are a box, 2 a point.
pub fn reformat_task(rec: &SourceRecord) -> Result<GroundingSample> {
    let nums = match &rec.raw_annotation {
        RawAnnotation::List(v) | RawAnnotation::PixelTuple(v) => v.clone(),
        RawAnnotation::Tagged(s) => parse_tagged(s)?.1,
    };
    if nums.len() != 2 && nums.len() != 4 {
        return Err(Error::Arity(nums.len()));
    }
    let annotation = normalize_coords(&nums, rec.coordinate_scale, rec.image_size)?;
    let (w, h) = rec.image_size.unwrap_or((1, 1));
    let sample = GroundingSample {
        id: rec.id.clone(),
        image_ref: rec.image_ref.clone(),
        image_size: (w, h),
        instruction: rec.raw_instruction.clone(),
        task: annotation.task(),
        annotation,
        source: rec.source_id.clone(),
        stage_tags: BTreeSet::new(),
    };
    sample.validate()?;
    Ok(sample)
}

/// One decoded input record: either a source record or the reason it could
/// not be parsed.
#[derive(Debug)]
pub struct Decoded {
    /// 1-based position in the input stream.
    pub index: usize,
    pub id: Option<String>,
    pub record: Result<SourceRecord, String>,
}

pub trait FormatAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Splits the stream into records. Only I/O failures are errors here;
    /// malformed records come back as `Decoded` with an `Err` payload.
    fn decode(&self, input: &mut dyn Read) -> Result<Vec<Decoded>>;
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: String,
    image: String,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    height: Option<u32>,
    instruction: String,
    #[serde(default)]
    coords: Option<Vec<f64>>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    scale: Option<CoordinateScale>,
    #[serde(default)]
    source: Option<String>,
}

fn decode_jsonl(
    input: &mut dyn Read,
    adapter: &str,
    convert: impl Fn(JsonRecord) -> Result<SourceRecord, String>,
) -> Result<Vec<Decoded>> {
    let mut out = Vec::new();
    let reader = BufReader::new(input);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("<{adapter} input>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let index = i + 1;
        match serde_json::from_str::<JsonRecord>(&line) {
            Ok(rec) => {
                let id = Some(rec.id.clone());
                out.push(Decoded {
                    index,
                    id,
                    record: convert(rec),
                });
            }
            Err(e) => out.push(Decoded {
                index,
                id: None,
                record: Err(format!("malformed JSON: {e}")),
            }),
        }
    }
    Ok(out)
}

fn size_of(w: Option<u32>, h: Option<u32>) -> Option<(u32, u32)> {
    w.zip(h)
}

pub struct FlatListJson;

impl FormatAdapter for FlatListJson {
    fn name(&self) -> &str {
        "flat-list"
    }

    fn decode(&self, input: &mut dyn Read) -> Result<Vec<Decoded>> {
        decode_jsonl(input, self.name(), |r| {
            let coords = r.coords.ok_or("missing `coords`")?;
            Ok(SourceRecord {
                id: r.id,
                image_ref: r.image,
                raw_instruction: r.instruction,
                raw_annotation: RawAnnotation::List(coords),
                coordinate_scale: r.scale.unwrap_or(CoordinateScale::Normalized),
                image_size: size_of(r.width, r.height),
                source_id: r.source.unwrap_or_else(|| "flat-list".into()),
            })
        })
    }
}

pub struct TaggedString;

impl FormatAdapter for TaggedString {
    fn name(&self) -> &str {
        "tagged"
    }

    fn decode(&self, input: &mut dyn Read) -> Result<Vec<Decoded>> {
        decode_jsonl(input, self.name(), |r| {
            let answer = r.answer.ok_or("missing `answer`")?;
            Ok(SourceRecord {
                id: r.id,
                image_ref: r.image,
                raw_instruction: r.instruction,
                raw_annotation: RawAnnotation::Tagged(answer),
                coordinate_scale: r.scale.unwrap_or(CoordinateScale::Pixel),
                image_size: size_of(r.width, r.height),
                source_id: r.source.unwrap_or_else(|| "tagged".into()),
            })
        })
    }
}

pub struct CsvPixel;

impl FormatAdapter for CsvPixel {
    fn name(&self) -> &str {
        "csv-pixel"
    }

    fn decode(&self, input: &mut dyn Read) -> Result<Vec<Decoded>> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut out = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let index = i + 1;
            let row = match row {
                Ok(r) => r,
                Err(e) if e.is_io_error() => {
                    return Err(Error::Validation(format!("csv-pixel input: {e}")))
                }
                Err(e) => {
                    out.push(Decoded {
                        index,
                        id: None,
                        record: Err(format!("malformed CSV row: {e}")),
                    });
                    continue;
                }
            };
            let id = row.get(0).map(str::to_string);
            let record = (|| -> Result<SourceRecord, String> {
                if row.len() < 5 {
                    return Err(format!("expected at least 5 columns, found {}", row.len()));
                }
                let dim = |k: usize| -> Result<u32, String> {
                    row[k]
                        .parse()
                        .map_err(|_| format!("column {} is not a pixel size: `{}`", k + 1, &row[k]))
                };
                let coords = row
                    .iter()
                    .skip(5)
                    .map(|t| t.parse::<f64>().map_err(|_| format!("non-numeric coordinate `{t}`")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SourceRecord {
                    id: row[0].to_string(),
                    image_ref: row[1].to_string(),
                    raw_instruction: row[4].to_string(),
                    raw_annotation: RawAnnotation::PixelTuple(coords),
                    coordinate_scale: CoordinateScale::Pixel,
                    image_size: Some((dim(2)?, dim(3)?)),
                    source_id: "csv-pixel".into(),
                })
            })();
            out.push(Decoded { index, id, record });
        }
        Ok(out)
    }
}

/// Adapters keyed by name.
pub struct AdapterRegistry {
    adapters: BTreeMap<String, Box<dyn FormatAdapter>>,
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        Self {
            adapters: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(FlatListJson));
        r.register(Box::new(TaggedString));
        r.register(Box::new(CsvPixel));
        r
    }

    pub fn register(&mut self, adapter: Box<dyn FormatAdapter>) {
        self.adapters.insert(adapter.name().to_string(), adapter);
    }

    pub fn get(&self, name: &str) -> Result<&dyn FormatAdapter> {
        self.adapters.get(name).map(|a| a.as_ref()).ok_or_else(|| {
            Error::Validation(format!(
                "unknown adapter `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.adapters.keys().map(String::as_str).collect()
    }
}

/// A record that did not make it into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub adapter: String,
    pub record: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub manifest: DatasetManifest,
    pub rejections: Vec<Rejection>,
}

impl IngestOutcome {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ingests one stream and appends to this outcome, so several sources can
    /// feed one manifest. Ids must stay unique across all of them.
    pub fn ingest(&mut self, adapter: &dyn FormatAdapter, input: &mut dyn Read) -> Result<()> {
        let decoded = adapter.decode(input)?;
        let converted: Vec<(usize, Option<String>, Result<GroundingSample, String>)> = decoded
            .into_par_iter()
            .map(|d| {
                let res = d
                    .record
                    .and_then(|rec| reformat_task(&rec).map_err(|e| e.to_string()));
                (d.index, d.id, res)
            })
            .collect();

        let mut seen: HashSet<String> =
            self.manifest.samples().iter().map(|s| s.id.clone()).collect();
        for (index, id, res) in converted {
            let reason = match res {
                Ok(sample) if seen.contains(&sample.id) => format!("duplicate id `{}`", sample.id),
                Ok(sample) => {
                    seen.insert(sample.id.clone());
                    self.manifest.push(sample)?;
                    continue;
                }
                Err(e) => e,
            };
            self.rejections.push(Rejection {
                adapter: adapter.name().to_string(),
                record: index,
                id,
                reason,
            });
        }
        Ok(())
    }
}

/// Ingests a single stream. Every record lands in exactly one of the manifest
/// or the rejection list, in input order.
pub fn ingest_dataset(adapter: &dyn FormatAdapter, input: &mut dyn Read) -> Result<IngestOutcome> {
    let mut out = IngestOutcome::new();
    out.ingest(adapter, input)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::TaskKind;
    use proptest::prelude::*;

    #[test]
    fn pair_wrapped_tags() {
        assert_eq!(parse_tagged_box("<box>(10,20),(30,40)</box>").unwrap(), [10.0, 20.0, 30.0, 40.0]);
        assert_eq!(parse_tagged("<point>[5, 7]</point>").unwrap().1, vec![5.0, 7.0]);
    }

    #[test]
    fn tagged_box_examples() {
        assert_eq!(parse_tagged_box("<box>10,20,30,40</box>").unwrap(), [10.0, 20.0, 30.0, 40.0]);
        assert_eq!(
            parse_tagged_box("<box>0.1 0.2 0.9 0.8</box>").unwrap(),
            [0.1, 0.2, 0.9, 0.8]
        );
        assert!(matches!(
            parse_tagged_box("<box>10,20,30</box>"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn tagged_errors_carry_offsets() {
        match parse_tagged("<box>10,2x,30,40</box>") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        match parse_tagged("<box>1,2,3,4") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
        assert!(parse_tagged("1,2,3,4").is_err());
        assert!(parse_tagged("</box>1,2</box>").is_err());
        assert!(parse_tagged("<box>1,<b>2</box>").is_err());
        assert!(parse_tagged("<box>1,2,3,4</box><box>").is_err());
    }

    #[test]
    fn normalize_examples() {
        let p = normalize_coords(&[500.0, 300.0], CoordinateScale::Pixel, Some((1000, 600))).unwrap();
        assert_eq!(p, Annotation::Point(Point::new(0.5, 0.5).unwrap()));
        let p = normalize_coords(&[0.25, 0.75], CoordinateScale::Normalized, Some((7, 9))).unwrap();
        assert_eq!(p, Annotation::Point(Point::new(0.25, 0.75).unwrap()));
        let b = normalize_coords(&[30.0, 40.0, 10.0, 20.0], CoordinateScale::Pixel, Some((100, 100)))
            .unwrap();
        assert_eq!(b, Annotation::Box(Rect::new(0.1, 0.2, 0.3, 0.4).unwrap()));
    }

    #[test]
    fn normalize_tolerance_and_rejection() {
        let p = normalize_coords(&[1.0000005, -0.0000005], CoordinateScale::Normalized, None).unwrap();
        assert_eq!(p.coords(), vec![1.0, 0.0]);
        assert!(matches!(
            normalize_coords(&[1.01, 0.5], CoordinateScale::Normalized, None),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(normalize_coords(&[5.0, 5.0], CoordinateScale::Pixel, None).is_err());
        assert!(matches!(
            normalize_coords(&[0.1, 0.2, 0.3], CoordinateScale::Normalized, None),
            Err(Error::Arity(3))
        ));
    }

    fn rec(ann: RawAnnotation) -> SourceRecord {
        SourceRecord {
            id: "r".into(),
            image_ref: "a.png".into(),
            raw_instruction: "tap".into(),
            raw_annotation: ann,
            coordinate_scale: CoordinateScale::Normalized,
            image_size: Some((100, 100)),
            source_id: "t".into(),
        }
    }

    #[test]
    fn task_kind_from_arity() {
        let s = reformat_task(&rec(RawAnnotation::List(vec![0.1, 0.2, 0.3, 0.4]))).unwrap();
        assert_eq!(s.task, TaskKind::BoxPrediction);
        let s = reformat_task(&rec(RawAnnotation::List(vec![0.1, 0.2]))).unwrap();
        assert_eq!(s.task, TaskKind::CenterPointLocalization);
        assert!(matches!(
            reformat_task(&rec(RawAnnotation::List(vec![0.1, 0.2, 0.3]))),
            Err(Error::Arity(3))
        ));
        assert_eq!(s.instruction, "tap");
    }

    #[test]
    fn ingest_counts() {
        let empty = ingest_dataset(&FlatListJson, &mut &b""[..]).unwrap();
        assert!(empty.manifest.is_empty() && empty.rejections.is_empty());

        let input = r#"{"id":"a","image":"a.png","width":10,"height":10,"instruction":"x","coords":[0.1,0.2]}
{"id":"b","image":"b.png","width":10,"height":10,"instruction":"x","coords":[0.1,0.2,0.3,0.4]}
{"id":"c","image":"c.png","width":10,"height":10,"instruction":"x","coords":[5,5],"scale":"pixel"}
{"id":"d","image":"d.png","instruction":"x","coords":[0.1]}
"#;
        let out = ingest_dataset(&FlatListJson, &mut input.as_bytes()).unwrap();
        assert_eq!(out.manifest.len(), 3);
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections[0].record, 4);
        let ids: Vec<_> = out.manifest.samples().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn csv_and_tagged_adapters() {
        let csv = "id,image,width,height,instruction,c1,c2,c3,c4\n\
                   k1,k1.png,200,100,\"click, then wait\",20,10,60,50\n\
                   k2,k2.png,200,100,point,100,50\n\
                   k3,k3.png,200,100,bad,abc,1\n";
        let out = ingest_dataset(&CsvPixel, &mut csv.as_bytes()).unwrap();
        assert_eq!(out.manifest.len(), 2);
        assert_eq!(out.rejections.len(), 1);
        let s = &out.manifest.samples()[0];
        assert_eq!(s.instruction, "click, then wait");
        assert_eq!(s.annotation.coords(), vec![0.1, 0.1, 0.3, 0.5]);

        let tagged = r#"{"id":"t1","image":"t.png","width":100,"height":200,"instruction":"x","answer":"<box>10 20 50 100</box>"}
{"id":"t2","image":"t.png","width":100,"height":200,"instruction":"x","answer":"<point>0.5,0.5</point>","scale":"normalized"}
"#;
        let out = ingest_dataset(&TaggedString, &mut tagged.as_bytes()).unwrap();
        assert_eq!(out.manifest.len(), 2);
        assert_eq!(out.manifest.samples()[0].annotation.coords(), vec![0.1, 0.1, 0.5, 0.5]);
    }

    #[test]
    fn duplicate_ids_across_sources_rejected() {
        let a = r#"{"id":"same","image":"a.png","width":10,"height":10,"instruction":"x","coords":[0.1,0.2]}"#;
        let mut out = IngestOutcome::new();
        out.ingest(&FlatListJson, &mut a.as_bytes()).unwrap();
        out.ingest(&FlatListJson, &mut a.as_bytes()).unwrap();
        assert_eq!(out.manifest.len(), 1);
        assert!(out.rejections[0].reason.contains("duplicate"));
    }

    #[test]
    fn registry_lookup() {
        let r = AdapterRegistry::builtin();
        assert_eq!(r.names(), ["csv-pixel", "flat-list", "tagged"]);
        assert!(r.get("nope").is_err());
    }

    proptest! {
        #[test]
        fn normalize_idempotent_on_quantized(a in 0u32..=1000, b in 0u32..=1000, c in 0u32..=1000, d in 0u32..=1000) {
            let raw = [a as f64 / 1000.0, b as f64 / 1000.0, c as f64 / 1000.0, d as f64 / 1000.0];
            let once = normalize_coords(&raw, CoordinateScale::Normalized, None).unwrap();
            let twice = normalize_coords(&once.coords(), CoordinateScale::Normalized, None).unwrap();
            prop_assert_eq!(once, twice);
            if let Annotation::Box(bx) = once {
                prop_assert!(bx.x0 <= bx.x1 && bx.y0 <= bx.y1);
            }
        }
    }
}
