use std::path::Path;

use serde_json::Value;

use super::{Asset, AssetKind, IngestError, Region};

/// Parses a figure-extractor manifest into assets sorted by (page, top edge)
/// with per-kind ordinals assigned in that order.
///
/// Field names follow the extractor's JSON schema: `figType`, `page`
/// (1-based), `name`, `caption`, `regionBoundary` and `renderURL`.
pub fn parse_figure_manifest(manifest: &str, image_root: &Path) -> Result<Vec<Asset>, IngestError> {
    let value: Value =
        serde_json::from_str(manifest).map_err(|e| IngestError::Manifest(e.to_string()))?;
    let records = value
        .as_array()
        .ok_or_else(|| IngestError::Manifest("top level must be an array".into()))?;

    let mut assets = records
        .iter()
        .enumerate()
        .map(|(i, r)| parse_record(i, r, image_root))
        .collect::<Result<Vec<_>, _>>()?;

    assets.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.top().total_cmp(&b.top()))
            .then(a.left().total_cmp(&b.left()))
            .then(a.kind.cmp(&b.kind))
            .then(a.label.cmp(&b.label))
    });
    let (mut figures, mut tables) = (0, 0);
    for asset in &mut assets {
        let counter = match asset.kind {
            AssetKind::Figure => &mut figures,
            AssetKind::Table => &mut tables,
        };
        *counter += 1;
        asset.ordinal = *counter;
    }
    Ok(assets)
}

fn parse_record(index: usize, record: &Value, image_root: &Path) -> Result<Asset, IngestError> {
    let err = |msg: String| IngestError::Manifest(format!("record {index}: {msg}"));
    let field = |name: &str| {
        record
            .get(name)
            .ok_or_else(|| err(format!("missing field `{name}`")))
    };
    let text = |name: &str| -> Result<String, IngestError> {
        match field(name)? {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(err(format!("field `{name}` must be a string"))),
        }
    };

    let kind = match field("figType")?.as_str() {
        Some("Figure") => AssetKind::Figure,
        Some("Table") => AssetKind::Table,
        other => return Err(err(format!("unknown figType {other:?}"))),
    };
    let page = field("page")?
        .as_u64()
        .filter(|&p| p >= 1 && p <= u32::MAX as u64)
        .ok_or_else(|| err("`page` must be a positive integer".into()))? as u32;

    let boundary = field("regionBoundary")?;
    let coord = |k: &str| {
        boundary
            .get(k)
            .and_then(Value::as_f64)
            .ok_or_else(|| err(format!("regionBoundary.{k} must be a number")))
    };
    let region = Region {
        x1: coord("x1")?,
        y1: coord("y1")?,
        x2: coord("x2")?,
        y2: coord("y2")?,
    };
    if !(region.x2 > region.x1 && region.y2 > region.y1) {
        return Err(err("regionBoundary is not a rectangle".into()));
    }

    Ok(Asset {
        kind,
        ordinal: 0,
        label: text("name")?,
        caption: text("caption")?,
        page,
        region: Some(region),
        image_path: image_root.join(text("renderURL")?),
        aligned_section: None,
        section_ordinal: None,
    })
}
