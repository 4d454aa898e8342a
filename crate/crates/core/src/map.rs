//! Language-enhanced map types and their JSON form.

use std::collections::HashSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::grid::GridMeta;

pub type ObjectId = u32;

pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl MapError {
    fn schema(path: impl Into<String>, message: impl fmt::Display) -> Self {
        MapError::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

/// Vehicle category used for ground truth and per-category reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "2-wheeler")]
    TwoWheeler,
    #[serde(rename = "car")]
    Car,
    #[serde(rename = "truck")]
    Truck,
    #[serde(rename = "construction")]
    Construction,
    #[serde(rename = "other")]
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::TwoWheeler,
        Category::Car,
        Category::Truck,
        Category::Construction,
        Category::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::TwoWheeler => "2-wheeler",
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Construction => "construction",
            Category::Other => "other",
        }
    }

    /// Noun used in generated question text.
    pub fn noun(&self, plural: bool) -> &'static str {
        match (self, plural) {
            (Category::TwoWheeler, false) => "two-wheeler",
            (Category::TwoWheeler, true) => "two-wheelers",
            (Category::Car, false) => "car",
            (Category::Car, true) => "cars",
            (Category::Truck, false) => "truck",
            (Category::Truck, true) => "trucks",
            (Category::Construction, false) => "construction vehicle",
            (Category::Construction, true) => "construction vehicles",
            (Category::Other, false) => "other vehicle",
            (Category::Other, true) => "other vehicles",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CropDescriptions {
    #[serde(default)]
    pub foreground_text: String,
    #[serde(default)]
    pub background_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_camera: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_px: Option<[f64; 4]>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// One object of the map. Serialized field order follows the per-object
/// listing `object_id`, `position`, `area`, `crop_descriptions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapObject {
    pub object_id: ObjectId,
    /// (x forward, y left) in meters from the ego vehicle.
    pub position: (f64, f64),
    #[serde(rename = "area")]
    pub area_m2: f64,
    #[serde(default)]
    pub crop_descriptions: CropDescriptions,
    #[serde(default)]
    pub cells: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl MapObject {
    /// Builds an object from its cells; area and position follow from the
    /// cells and grid resolution.
    pub fn from_cells(object_id: ObjectId, cells: Vec<(usize, usize)>, meta: &GridMeta) -> Self {
        let n = cells.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(r, c) in &cells {
            // cells come from the grid, so they are always in bounds here
            let (x, y) = meta.cell_to_metric(r, c).expect("cell in bounds");
            sx += x;
            sy += y;
        }
        let position = if cells.is_empty() { (0.0, 0.0) } else { (sx / n, sy / n) };
        Self {
            object_id,
            position,
            area_m2: n * meta.cell_area_m2(),
            crop_descriptions: CropDescriptions::default(),
            cells,
            category: None,
            extra: Map::new(),
        }
    }

    pub fn x(&self) -> f64 {
        self.position.0
    }

    pub fn y(&self) -> f64 {
        self.position.1
    }

    /// Planar distance from the ego vehicle.
    pub fn range(&self) -> f64 {
        self.position.0.hypot(self.position.1)
    }

    pub fn distance_to(&self, other: &MapObject) -> f64 {
        (self.position.0 - other.position.0).hypot(self.position.1 - other.position.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BevSource {
    Predicted,
    GroundTruth,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionFailure {
    pub object_id: ObjectId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub captioner_name: String,
    pub bev_source: BevSource,
    /// Objects no camera could see; they keep geometry but carry empty text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_visible: Vec<ObjectId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caption_failures: Vec<CaptionFailure>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Provenance {
    pub fn new(captioner_name: impl Into<String>, bev_source: BevSource) -> Self {
        Self {
            captioner_name: captioner_name.into(),
            bev_source,
            not_visible: Vec::new(),
            caption_failures: Vec::new(),
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageEnhancedMap {
    pub scene_token: String,
    pub grid_meta: GridMeta,
    pub provenance: Provenance,
    pub objects: Vec<MapObject>,
    pub extra: Map<String, Value>,
}

impl LanguageEnhancedMap {
    pub fn new(
        scene_token: impl Into<String>,
        grid_meta: GridMeta,
        provenance: Provenance,
        objects: Vec<MapObject>,
    ) -> Self {
        Self {
            scene_token: scene_token.into(),
            grid_meta,
            provenance,
            objects,
            extra: Map::new(),
        }
    }

    pub fn object(&self, id: ObjectId) -> Option<&MapObject> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn object_ids(&self) -> Vec<ObjectId> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    pub fn validate(&self) -> Result<(), MapError> {
        self.grid_meta
            .validate()
            .map_err(|e| MapError::schema("grid_meta", e))?;
        let mut seen = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.object_id == 0 {
                return Err(MapError::schema(
                    format!("objects[{i}].object_id"),
                    "object_id must be positive",
                ));
            }
            if !seen.insert(o.object_id) {
                return Err(MapError::schema(
                    format!("objects[{i}].object_id"),
                    format!("duplicate object_id {}", o.object_id),
                ));
            }
            if !(o.position.0.is_finite() && o.position.1.is_finite()) {
                return Err(MapError::schema(
                    format!("objects[{i}].position"),
                    "position must be finite",
                ));
            }
            if !(o.area_m2.is_finite() && o.area_m2 > 0.0) {
                return Err(MapError::schema(
                    format!("objects[{i}].area"),
                    "area must be positive",
                ));
            }
            if let Some(&(r, c)) = o
                .cells
                .iter()
                .find(|&&(r, c)| !self.grid_meta.contains_cell(r, c))
            {
                return Err(MapError::schema(
                    format!("objects[{i}].cells"),
                    format!("cell ({r}, {c}) outside grid"),
                ));
            }
        }
        Ok(())
    }

    /// JSON text with one object entry per line.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        let push_field = |out: &mut String, key: &str, value: String, last: bool| {
            out.push_str("  \"");
            out.push_str(key);
            out.push_str("\": ");
            out.push_str(&value);
            if !last {
                out.push(',');
            }
            out.push('\n');
        };
        push_field(&mut out, "format_version", MAP_FORMAT_VERSION.to_string(), false);
        push_field(&mut out, "scene_token", inline_json(&self.scene_token), false);
        push_field(&mut out, "grid_meta", inline_json(&self.grid_meta), false);
        push_field(&mut out, "provenance", inline_json(&self.provenance), false);
        for (k, v) in &self.extra {
            push_field(&mut out, k, inline_json(v), false);
        }
        if self.objects.is_empty() {
            push_field(&mut out, "objects", "[]".into(), true);
        } else {
            let body: Vec<String> = self
                .objects
                .iter()
                .map(|o| format!("    {}", inline_json(o)))
                .collect();
            push_field(
                &mut out,
                "objects",
                format!("[\n{}\n  ]", body.join(",\n")),
                true,
            );
        }
        out.push('}');
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| MapError::schema("$", e))?;
        let Value::Object(mut root) = value else {
            return Err(MapError::schema("$", "expected a JSON object"));
        };
        match root.remove("format_version") {
            Some(Value::Number(n)) if n.as_u64() == Some(MAP_FORMAT_VERSION as u64) => {}
            Some(other) => {
                return Err(MapError::schema(
                    "format_version",
                    format!("unsupported version {other}"),
                ))
            }
            None => return Err(MapError::schema("format_version", "missing field")),
        }
        let scene_token: String = take_field(&mut root, "scene_token")?;
        let grid_meta: GridMeta = take_field(&mut root, "grid_meta")?;
        let provenance: Provenance = take_field(&mut root, "provenance")?;
        let raw_objects = match root.remove("objects") {
            Some(Value::Array(items)) => items,
            Some(_) => return Err(MapError::schema("objects", "expected an array")),
            None => return Err(MapError::schema("objects", "missing field")),
        };
        let objects = raw_objects
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<MapObject>(v)
                    .map_err(|e| MapError::schema(format!("objects[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let map = Self {
            scene_token,
            grid_meta,
            provenance,
            objects,
            extra: root,
        };
        map.validate()?;
        Ok(map)
    }
}

fn take_field<T: serde::de::DeserializeOwned>(
    root: &mut Map<String, Value>,
    key: &str,
) -> Result<T, MapError> {
    let v = root
        .remove(key)
        .ok_or_else(|| MapError::schema(key, "missing field"))?;
    serde_json::from_value(v).map_err(|e| MapError::schema(key, e))
}

/// Single-line JSON with a space after `:` and `,`, and integral floats
/// written without a fractional part.
pub fn inline_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.fract() == 0.0 && value.abs() < 9.007_199_254_740_992e15 {
            write!(w, "{}", value as i64)
        } else {
            serde_json::ser::CompactFormatter.write_f64(w, value)
        }
    }
}
