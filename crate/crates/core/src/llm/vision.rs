use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use image::{ImageFormat, ImageReader};

use super::LlmError;

pub const MAX_LONG_EDGE: u32 = 2048;
pub const MAX_IMAGE_BYTES: usize = 20 * 1024 * 1024;

/// Image bytes ready to embed in a request.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub mime: &'static str,
    pub bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

impl PreparedImage {
    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// Checks that `path` is a PNG or JPEG and downscales it so the long edge is
/// at most [`MAX_LONG_EDGE`] pixels. Images already small enough are sent as
/// they are.
pub fn prepare_image(path: &Path) -> Result<PreparedImage, LlmError> {
    let bytes = std::fs::read(path)
        .map_err(|e| LlmError::InvalidImage(format!("{}: {e}", path.display())))?;
    let format = image::guess_format(&bytes)
        .map_err(|e| LlmError::InvalidImage(format!("{}: {e}", path.display())))?;
    let mime = match format {
        ImageFormat::Png => "image/png",
        ImageFormat::Jpeg => "image/jpeg",
        other => {
            return Err(LlmError::InvalidImage(format!(
                "{}: {other:?} is not supported, use PNG or JPEG",
                path.display()
            )))
        }
    };
    let reader = ImageReader::with_format(Cursor::new(&bytes), format);
    let (width, height) = reader
        .into_dimensions()
        .map_err(|e| LlmError::InvalidImage(format!("{}: {e}", path.display())))?;

    let prepared = if width.max(height) <= MAX_LONG_EDGE {
        PreparedImage {
            mime,
            bytes,
            width,
            height,
        }
    } else {
        let decoded = image::load_from_memory_with_format(&bytes, format)
            .map_err(|e| LlmError::InvalidImage(format!("{}: {e}", path.display())))?;
        let resized = decoded.resize(
            MAX_LONG_EDGE,
            MAX_LONG_EDGE,
            image::imageops::FilterType::Triangle,
        );
        let mut out = Cursor::new(Vec::new());
        let written = if format == ImageFormat::Jpeg {
            resized.to_rgb8().write_to(&mut out, ImageFormat::Jpeg)
        } else {
            resized.write_to(&mut out, ImageFormat::Png)
        };
        written
            .map_err(|e| LlmError::InvalidImage(format!("re-encoding {}: {e}", path.display())))?;
        PreparedImage {
            mime,
            bytes: out.into_inner(),
            width: resized.width(),
            height: resized.height(),
        }
    };
    if prepared.bytes.len() > MAX_IMAGE_BYTES {
        return Err(LlmError::ImageTooLarge {
            bytes: prepared.bytes.len(),
            limit: MAX_IMAGE_BYTES,
        });
    }
    Ok(prepared)
}
