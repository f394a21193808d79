//! Declarative chart specification: data table, the eight-dimensional design
//! parameter space with bounds, task annotations, and the encode/decode rules
//! that bridge optimiser coordinates and valid specs.
//!
//! All types are immutable after construction and safe to share across
//! concurrent evaluators.

use crate::color::{Hsv, Rgb};
use crate::error::{Error, Result, Violation};
use serde::{Deserialize, Serialize};

/// Chart height is fixed; only the width varies (through the aspect ratio).
pub const FIXED_HEIGHT: u32 = 600;

/// Default bar colour, a common hue in the source corpus.
pub const DEFAULT_BAR_COLOR_HEX: &str = "#949d48";

pub mod bounds {
    pub const ASPECT: (f64, f64) = (0.33, 3.0);
    pub const FONT: (f64, f64) = (10.0, 36.0);
    pub const BAR_WIDTH: (f64, f64) = (20.0, 180.0);
    pub const CANVAS_WIDTH: (u32, u32) = (200, 1800);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub category: String,
    pub value: f64,
}

/// Relational table of (category, value) records, order-preserving.
///
/// Serialises as a plain array of rows; the object form
/// `{"rows": [...], "value_unit": ...}` is accepted on input and emitted when
/// a unit is set.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(from = "TableRepr")]
pub struct DataTable {
    pub rows: Vec<Row>,
    pub value_unit: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TableRepr {
    Object {
        rows: Vec<Row>,
        #[serde(default)]
        value_unit: Option<String>,
    },
    Rows(Vec<Row>),
}

impl From<TableRepr> for DataTable {
    fn from(repr: TableRepr) -> Self {
        match repr {
            TableRepr::Object { rows, value_unit } => DataTable { rows, value_unit },
            TableRepr::Rows(rows) => DataTable {
                rows,
                value_unit: None,
            },
        }
    }
}

impl Serialize for DataTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.value_unit {
            None => self.rows.serialize(s),
            Some(unit) => {
                use serde::ser::SerializeStruct;
                let mut st = s.serialize_struct("DataTable", 2)?;
                st.serialize_field("rows", &self.rows)?;
                st.serialize_field("value_unit", unit)?;
                st.end()
            }
        }
    }
}

impl DataTable {
    pub fn new(rows: Vec<(String, f64)>) -> Self {
        DataTable {
            rows: rows
                .into_iter()
                .map(|(category, value)| Row { category, value })
                .collect(),
            value_unit: None,
        }
    }

    pub fn contains_category(&self, label: &str) -> bool {
        self.rows.iter().any(|r| r.category == label)
    }

    /// Index of the maximum-valued row (first on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.rows.iter().enumerate() {
            if best.map_or(true, |(_, v)| r.value > v) {
                best = Some((i, r.value));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rows.len() < 2 {
            out.push(Violation {
                field: "table".into(),
                message: format!("at least 2 rows required, got {}", self.rows.len()),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if r.category.trim().is_empty() {
                out.push(Violation {
                    field: format!("table.rows[{i}].category"),
                    message: "empty category label".into(),
                });
            }
            if !seen.insert(r.category.as_str()) {
                out.push(Violation {
                    field: format!("table.rows[{i}].category"),
                    message: format!("duplicate category label {:?}", r.category),
                });
            }
            if !r.value.is_finite() {
                out.push(Violation {
                    field: format!("table.rows[{i}].value"),
                    message: "value must be finite".into(),
                });
            } else if r.value < 0.0 {
                out.push(Violation {
                    field: format!("table.rows[{i}].value"),
                    message: format!(
                        "negative value {} rejected; bar length encodes non-negative magnitudes",
                        r.value
                    ),
                });
            }
        }
        out
    }
}

/// Category-axis label rotation, one of the three permitted angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum LabelRotation {
    Deg0,
    Deg45Neg,
    Deg90Neg,
}

impl LabelRotation {
    pub const ALL: [LabelRotation; 3] = [
        LabelRotation::Deg0,
        LabelRotation::Deg45Neg,
        LabelRotation::Deg90Neg,
    ];

    pub fn degrees(self) -> f64 {
        match self {
            LabelRotation::Deg0 => 0.0,
            LabelRotation::Deg45Neg => -45.0,
            LabelRotation::Deg90Neg => -90.0,
        }
    }
}

impl TryFrom<i32> for LabelRotation {
    type Error = String;
    fn try_from(v: i32) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(LabelRotation::Deg0),
            -45 => Ok(LabelRotation::Deg45Neg),
            -90 => Ok(LabelRotation::Deg90Neg),
            other => Err(format!(
                "label_rotation must be one of 0, -45, -90; got {other}"
            )),
        }
    }
}

impl From<LabelRotation> for i32 {
    fn from(r: LabelRotation) -> i32 {
        r.degrees() as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Bars extend along the horizontal value axis.
    Horizontal,
    /// Bars extend along the vertical value axis.
    Vertical,
}

/// One point in the eight-dimensional design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    pub aspect_ratio: f64,
    pub axis_label_font_size: f64,
    pub data_label_font_size: f64,
    pub bar_width: f64,
    #[serde(with = "hsv_triple")]
    pub bar_color: Hsv,
    #[serde(with = "hsv_triple")]
    pub highlight_color: Hsv,
    pub label_rotation: LabelRotation,
    pub orientation: Orientation,
}

mod hsv_triple {
    use super::Hsv;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Hsv, s: S) -> Result<S::Ok, S::Error> {
        [c.h, c.s, c.v].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Hsv, D::Error> {
        let [h, s, v] = <[f64; 3]>::deserialize(d)?;
        Ok(Hsv::new(h, s, v))
    }
}

impl DesignParams {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |field: &str, v: f64, (lo, hi): (f64, f64)| {
            if !(v.is_finite() && v >= lo && v <= hi) {
                out.push(Violation {
                    field: field.into(),
                    message: format!("{v} outside bound [{lo}, {hi}]"),
                });
            }
        };
        check("aspect_ratio", self.aspect_ratio, bounds::ASPECT);
        check("axis_label_font_size", self.axis_label_font_size, bounds::FONT);
        check("data_label_font_size", self.data_label_font_size, bounds::FONT);
        check("bar_width", self.bar_width, bounds::BAR_WIDTH);
        for (name, c) in [("bar_color", self.bar_color), ("highlight_color", self.highlight_color)] {
            if !(c.h.is_finite() && c.h >= 0.0 && c.h < 360.0) {
                out.push(Violation {
                    field: format!("{name}.h"),
                    message: format!("{} outside hue range [0, 360)", c.h),
                });
            }
            if !(c.s.is_finite() && (0.0..=1.0).contains(&c.s)) {
                out.push(Violation {
                    field: format!("{name}.s"),
                    message: format!("{} outside [0, 1]", c.s),
                });
            }
            if !(c.v.is_finite() && (0.0..=1.0).contains(&c.v)) {
                out.push(Violation {
                    field: format!("{name}.v"),
                    message: format!("{} outside [0, 1]", c.v),
                });
            }
        }
        out
    }
}

/// The four analytical task types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    /// Find Extremum: name the data point with the extreme value.
    FE,
    /// Retrieve Value: read the value of a named target.
    RV,
    /// Compute Derived Value: combine two or more retrieved values.
    CDV,
    /// Compare: judge a relation between two or more values.
    CP,
}

impl std::str::FromStr for TaskType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "FE" => Ok(TaskType::FE),
            "RV" => Ok(TaskType::RV),
            "CDV" => Ok(TaskType::CDV),
            "CP" => Ok(TaskType::CP),
            other => Err(format!("unknown task type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(rename = "type")]
    pub task_type: TaskType,
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

impl TaskSpec {
    /// Target-cardinality rule per task type. FE may leave targets empty;
    /// the extremum target is derived from the table at AOI time.
    pub fn violations(&self, table: &DataTable) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.targets.len();
        let ok = match self.task_type {
            TaskType::FE => n <= 1,
            TaskType::RV => n == 1,
            TaskType::CDV | TaskType::CP => n >= 2,
        };
        if !ok {
            let want = match self.task_type {
                TaskType::FE => "at most one target (empty derives the extremum)",
                TaskType::RV => "exactly one target",
                TaskType::CDV | TaskType::CP => "two or more targets",
            };
            out.push(Violation {
                field: "task.targets".into(),
                message: format!("{:?} requires {want}, got {n}", self.task_type),
            });
        }
        for t in &self.targets {
            if !table.contains_category(t) {
                out.push(Violation {
                    field: "task.targets".into(),
                    message: format!("unknown target category {t:?}"),
                });
            }
        }
        out
    }
}

/// A fully bound chart: data, design parameters, and task annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub table: DataTable,
    pub params: DesignParams,
    pub task: TaskSpec,
    #[serde(default = "default_fixed_height")]
    pub fixed_height: u32,
}

fn default_fixed_height() -> u32 {
    FIXED_HEIGHT
}

impl ChartSpec {
    /// Canvas size in pixels. The width derived from the aspect ratio is
    /// clamped to [200, 1800]; at height 600 the aspect bound 0.33 lands on
    /// 198 px, so the width bound binds there.
    pub fn canvas_size(&self) -> (u32, u32) {
        let w = (self.fixed_height as f64 * self.params.aspect_ratio).round() as u32;
        (
            w.clamp(bounds::CANVAS_WIDTH.0, bounds::CANVAS_WIDTH.1),
            self.fixed_height,
        )
    }

    pub fn is_highlighted(&self, category: &str) -> bool {
        self.task.targets.iter().any(|t| t == category)
    }
}

/// Returns the spec unchanged when all invariants hold; otherwise an error
/// listing every violated invariant with the offending field.
pub fn validate(spec: ChartSpec) -> Result<ChartSpec> {
    let mut v = spec.table.violations();
    v.extend(spec.params.violations());
    v.extend(spec.task.violations(&spec.table));
    if spec.fixed_height != FIXED_HEIGHT {
        v.push(Violation {
            field: "fixed_height".into(),
            message: format!("must be {FIXED_HEIGHT}, got {}", spec.fixed_height),
        });
    }
    if v.is_empty() {
        Ok(spec)
    } else {
        Err(Error::Validation(v))
    }
}

/// The corpus-default design: square canvas, 40 px bars, olive-green fill,
/// horizontal labels, highlight initialised equal to the bar colour.
pub fn default_params() -> DesignParams {
    let base = Hsv::from_rgb(Rgb::from_hex(DEFAULT_BAR_COLOR_HEX).unwrap());
    DesignParams {
        aspect_ratio: 1.0,
        axis_label_font_size: 17.0,
        data_label_font_size: 24.0,
        bar_width: 40.0,
        bar_color: base,
        highlight_color: base,
        label_rotation: LabelRotation::Deg0,
        orientation: Orientation::Horizontal,
    }
}

pub fn default_spec(table: DataTable, task: TaskSpec) -> Result<ChartSpec> {
    validate(ChartSpec {
        table,
        params: default_params(),
        task,
        fixed_height: FIXED_HEIGHT,
    })
}

// ---------------------------------------------------------------------------
// Parameter space and optimiser-coordinate encoding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimSpec {
    pub name: &'static str,
    pub kind: DimKind,
}

/// The eight user-facing design dimensions. The encoded optimiser
/// representation flattens each HSV colour to three unit coordinates and
/// each categorical to one, giving 12 coordinates in [0,1].
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    dims: Vec<DimSpec>,
}

/// Number of encoded unit-hypercube coordinates.
pub const ENCODED_DIM: usize = 12;

impl Default for ParameterSpace {
    fn default() -> Self {
        let cont = |name, (lo, hi)| DimSpec {
            name,
            kind: DimKind::Continuous { lo, hi },
        };
        ParameterSpace {
            dims: vec![
                cont("aspect_ratio", bounds::ASPECT),
                cont("axis_label_font_size", bounds::FONT),
                cont("data_label_font_size", bounds::FONT),
                cont("bar_width", bounds::BAR_WIDTH),
                cont("bar_color", (0.0, 1.0)),
                cont("highlight_color", (0.0, 1.0)),
                DimSpec {
                    name: "label_rotation",
                    kind: DimKind::Categorical {
                        options: vec!["0".into(), "-45".into(), "-90".into()],
                    },
                },
                DimSpec {
                    name: "orientation",
                    kind: DimKind::Categorical {
                        options: vec!["horizontal".into(), "vertical".into()],
                    },
                },
            ],
        }
    }
}

impl ParameterSpace {
    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    pub fn encoded_dim(&self) -> usize {
        ENCODED_DIM
    }
}

fn lerp(c: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + c.clamp(0.0, 1.0) * (hi - lo)
}

fn inv_lerp(v: f64, (lo, hi): (f64, f64)) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn decode_hue(c: f64) -> f64 {
    let h = c.clamp(0.0, 1.0) * 360.0;
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Equal-width interval partition over the rotation options.
fn decode_rotation(c: f64) -> LabelRotation {
    let c = c.clamp(0.0, 1.0);
    if c < 1.0 / 3.0 {
        LabelRotation::Deg0
    } else if c < 2.0 / 3.0 {
        LabelRotation::Deg45Neg
    } else {
        LabelRotation::Deg90Neg
    }
}

fn decode_orientation(c: f64) -> Orientation {
    if c.clamp(0.0, 1.0) < 0.5 {
        Orientation::Horizontal
    } else {
        Orientation::Vertical
    }
}

/// Decodes optimiser coordinates into a valid `DesignParams`: continuous
/// values are clamped to their bounds, categoricals decoded by equal-width
/// interval partition.
pub fn clamp_to_space(raw: &[f64], space: &ParameterSpace) -> Result<DesignParams> {
    if raw.len() != space.encoded_dim() {
        return Err(Error::Dimensionality {
            expected: space.encoded_dim(),
            got: raw.len(),
        });
    }
    Ok(DesignParams {
        aspect_ratio: lerp(raw[0], bounds::ASPECT),
        axis_label_font_size: lerp(raw[1], bounds::FONT),
        data_label_font_size: lerp(raw[2], bounds::FONT),
        bar_width: lerp(raw[3], bounds::BAR_WIDTH),
        bar_color: Hsv::new(decode_hue(raw[4]), raw[5].clamp(0.0, 1.0), raw[6].clamp(0.0, 1.0)),
        highlight_color: Hsv::new(decode_hue(raw[7]), raw[8].clamp(0.0, 1.0), raw[9].clamp(0.0, 1.0)),
        label_rotation: decode_rotation(raw[10]),
        orientation: decode_orientation(raw[11]),
    })
}

/// Inverse of `clamp_to_space`: categoricals map to their interval centres.
pub fn encode(params: &DesignParams) -> [f64; ENCODED_DIM] {
    [
        inv_lerp(params.aspect_ratio, bounds::ASPECT),
        inv_lerp(params.axis_label_font_size, bounds::FONT),
        inv_lerp(params.data_label_font_size, bounds::FONT),
        inv_lerp(params.bar_width, bounds::BAR_WIDTH),
        params.bar_color.h / 360.0,
        params.bar_color.s,
        params.bar_color.v,
        params.highlight_color.h / 360.0,
        params.highlight_color.s,
        params.highlight_color.v,
        match params.label_rotation {
            LabelRotation::Deg0 => 1.0 / 6.0,
            LabelRotation::Deg45Neg => 0.5,
            LabelRotation::Deg90Neg => 5.0 / 6.0,
        },
        match params.orientation {
            Orientation::Horizontal => 0.25,
            Orientation::Vertical => 0.75,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> DataTable {
        DataTable::new(vec![
            ("Bus".into(), 104.0),
            ("Domestic flight".into(), 246.0),
            ("National rail".into(), 41.0),
            ("Medium car (petrol)".into(), 191.6),
            ("Eurostar".into(), 6.0),
        ])
    }

    fn rv_task() -> TaskSpec {
        TaskSpec {
            task_type: TaskType::RV,
            targets: vec!["Bus".into()],
            question: None,
        }
    }

    #[test]
    fn default_spec_is_valid_with_corpus_initial_values() {
        let spec = default_spec(sample_table(), rv_task()).unwrap();
        assert_eq!(spec.params.aspect_ratio, 1.0);
        assert_eq!(spec.params.axis_label_font_size, 17.0);
        assert_eq!(spec.params.data_label_font_size, 24.0);
        assert_eq!(spec.params.bar_width, 40.0);
        assert_eq!(spec.params.bar_color.to_rgb().to_hex(), "#949d48");
        assert_eq!(spec.params.highlight_color, spec.params.bar_color);
        assert_eq!(spec.params.label_rotation, LabelRotation::Deg0);
        assert_eq!(spec.params.orientation, Orientation::Horizontal);
        assert_eq!(spec.canvas_size(), (600, 600));
    }

    #[test]
    fn aspect_out_of_bounds_names_field_and_bound() {
        let mut spec = default_spec(sample_table(), rv_task()).unwrap();
        spec.params.aspect_ratio = 5.0;
        let err = validate(spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("aspect_ratio"), "{msg}");
        assert!(msg.contains("0.33") && msg.contains("3"), "{msg}");
    }

    #[test]
    fn fe_with_two_targets_rejected() {
        let task = TaskSpec {
            task_type: TaskType::FE,
            targets: vec!["Bus".into(), "Eurostar".into()],
            question: None,
        };
        let err = default_spec(sample_table(), task).unwrap_err();
        assert!(err.to_string().contains("task.targets"));
    }

    #[test]
    fn cp_with_two_targets_highlights_both() {
        let task = TaskSpec {
            task_type: TaskType::CP,
            targets: vec!["Bus".into(), "Domestic flight".into()],
            question: None,
        };
        let spec = default_spec(sample_table(), task).unwrap();
        assert!(spec.is_highlighted("Bus"));
        assert!(spec.is_highlighted("Domestic flight"));
        assert!(!spec.is_highlighted("Eurostar"));
    }

    #[test]
    fn table_invariants_reported_together() {
        let table = DataTable::new(vec![
            ("A".into(), -3.0),
            ("A".into(), f64::NAN),
            ("".into(), 1.0),
        ]);
        let v = table.violations();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn empty_table_rejected_by_default_spec() {
        let err = default_spec(DataTable::new(vec![]), rv_task()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn clamp_below_bound_hits_lower_bound() {
        let space = ParameterSpace::default();
        let mut raw = [0.5; ENCODED_DIM];
        raw[0] = -2.0;
        let p = clamp_to_space(&raw, &space).unwrap();
        assert_eq!(p.aspect_ratio, bounds::ASPECT.0);
    }

    #[test]
    fn clamp_on_bounds_unchanged() {
        let space = ParameterSpace::default();
        let mut raw = [0.0; ENCODED_DIM];
        let p = clamp_to_space(&raw, &space).unwrap();
        assert_eq!(p.aspect_ratio, bounds::ASPECT.0);
        assert_eq!(p.bar_width, bounds::BAR_WIDTH.0);
        raw = [1.0; ENCODED_DIM];
        let p = clamp_to_space(&raw, &space).unwrap();
        assert_eq!(p.aspect_ratio, bounds::ASPECT.1);
        assert_eq!(p.bar_width, bounds::BAR_WIDTH.1);
    }

    #[test]
    fn rotation_interval_partition() {
        let space = ParameterSpace::default();
        let decode = |c: f64| {
            let mut raw = [0.5; ENCODED_DIM];
            raw[10] = c;
            clamp_to_space(&raw, &space).unwrap().label_rotation
        };
        assert_eq!(decode(0.0), LabelRotation::Deg0);
        assert_eq!(decode(0.32), LabelRotation::Deg0);
        assert_eq!(decode(0.34), LabelRotation::Deg45Neg);
        assert_eq!(decode(0.7), LabelRotation::Deg90Neg);
        assert_eq!(decode(1.0), LabelRotation::Deg90Neg);
    }

    #[test]
    fn dimensionality_mismatch_rejected() {
        let space = ParameterSpace::default();
        assert!(matches!(
            clamp_to_space(&[0.5; 3], &space),
            Err(Error::Dimensionality { expected: 12, got: 3 })
        ));
    }

    #[test]
    fn spec_json_round_trip_and_unknown_key_rejected() {
        let spec = default_spec(sample_table(), rv_task()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ChartSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);

        let bad = r#"{"table":{"rows":[],"value_unit":null},"params":{},"task":{"type":"RV"},"surprise":1}"#;
        assert!(serde_json::from_str::<ChartSpec>(bad).is_err());
    }

    #[test]
    fn space_has_eight_user_facing_dims() {
        let space = ParameterSpace::default();
        assert_eq!(space.dims().len(), 8);
        assert_eq!(space.encoded_dim(), 12);
    }
}
