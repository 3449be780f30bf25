use serde_json::{json, Map, Value};

/// Text preceding the embedded JSON schema in structured-output instructions.
pub const SCHEMA_MARKER: &str = "JSON Schema:";

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Text,
    Integer { min: Option<i64>, max: Option<i64> },
    Number { min: Option<f64>, max: Option<f64> },
    Bool,
    Enum(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub fn required(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
            required: false,
        }
    }
}

/// Flat object schema: named fields with scalar types and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub fields: Vec<FieldSpec>,
}

impl Schema {
    pub fn new(fields: Vec<FieldSpec>) -> Self {
        Self { fields }
    }

    pub fn to_json_schema(&self) -> Value {
        let mut properties = Map::new();
        for f in &self.fields {
            let spec = match &f.kind {
                FieldKind::Text => json!({"type": "string"}),
                FieldKind::Bool => json!({"type": "boolean"}),
                FieldKind::Enum(values) => json!({"type": "string", "enum": values}),
                FieldKind::Integer { min, max } => {
                    bounded("integer", min.map(Value::from), max.map(Value::from))
                }
                FieldKind::Number { min, max } => {
                    bounded("number", min.map(Value::from), max.map(Value::from))
                }
            };
            properties.insert(f.name.clone(), spec);
        }
        let required: Vec<&str> = self
            .fields
            .iter()
            .filter(|f| f.required)
            .map(|f| f.name.as_str())
            .collect();
        json!({"type": "object", "properties": properties, "required": required})
    }

    pub fn instruction(&self) -> String {
        format!(
            "Respond with a single JSON object and nothing else. {SCHEMA_MARKER} {}",
            self.to_json_schema()
        )
    }

    /// Extracts the first JSON object from `reply` and validates it. Unknown
    /// fields are dropped; `null` counts as absent.
    pub fn parse(&self, reply: &str) -> Result<Map<String, Value>, String> {
        let object = extract_json_object(reply)
            .ok_or_else(|| "no JSON object found in the reply".to_string())?;
        self.validate(&object)
    }

    pub fn validate(&self, object: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        let mut out = Map::new();
        for f in &self.fields {
            let value = match object.get(&f.name) {
                None | Some(Value::Null) if f.required => {
                    return Err(format!("missing required field `{}`", f.name))
                }
                None | Some(Value::Null) => continue,
                Some(v) => v,
            };
            out.insert(f.name.clone(), check(f, value)?);
        }
        Ok(out)
    }
}

fn bounded(ty: &str, min: Option<Value>, max: Option<Value>) -> Value {
    let mut spec = json!({"type": ty});
    if let Some(min) = min {
        spec["minimum"] = min;
    }
    if let Some(max) = max {
        spec["maximum"] = max;
    }
    spec
}

fn check(f: &FieldSpec, value: &Value) -> Result<Value, String> {
    let name = &f.name;
    match &f.kind {
        FieldKind::Text => value
            .as_str()
            .map(|s| Value::from(s.to_string()))
            .ok_or_else(|| format!("`{name}` must be a string")),
        FieldKind::Bool => value
            .as_bool()
            .map(Value::from)
            .ok_or_else(|| format!("`{name}` must be a boolean")),
        FieldKind::Enum(values) => {
            let s = value
                .as_str()
                .ok_or_else(|| format!("`{name}` must be a string"))?;
            values
                .iter()
                .find(|v| v.eq_ignore_ascii_case(s.trim()))
                .map(|v| Value::from(v.clone()))
                .ok_or_else(|| format!("`{name}` must be one of {values:?}"))
        }
        FieldKind::Integer { min, max } => {
            let n = value
                .as_i64()
                .or_else(|| {
                    value
                        .as_f64()
                        .filter(|x| x.fract() == 0.0)
                        .map(|x| x as i64)
                })
                .ok_or_else(|| format!("`{name}` must be an integer"))?;
            if min.is_some_and(|m| n < m) || max.is_some_and(|m| n > m) {
                return Err(format!("`{name}` = {n} is outside {}", range(min, max)));
            }
            Ok(Value::from(n))
        }
        FieldKind::Number { min, max } => {
            let n = value
                .as_f64()
                .ok_or_else(|| format!("`{name}` must be a number"))?;
            if !n.is_finite() || min.is_some_and(|m| n < m) || max.is_some_and(|m| n > m) {
                return Err(format!("`{name}` = {n} is outside {}", range(min, max)));
            }
            Ok(Value::from(n))
        }
    }
}

fn range<T: std::fmt::Display>(min: &Option<T>, max: &Option<T>) -> String {
    let lo = min.as_ref().map_or("-inf".to_string(), |m| m.to_string());
    let hi = max.as_ref().map_or("inf".to_string(), |m| m.to_string());
    format!("[{lo}, {hi}]")
}

/// First balanced `{...}` in `text` that parses as a JSON object, so code
/// fences and surrounding prose are tolerated.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    for (start, _) in text.match_indices('{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (offset, c) in text[start..].char_indices() {
            if in_string {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => in_string = false,
                    _ => {}
                }
                continue;
            }
            match c {
                '"' => in_string = true,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(Value::Object(map)) =
                            serde_json::from_str(&text[start..start + offset + 1])
                        {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}
