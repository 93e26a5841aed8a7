use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::WorldError;

/// An RGB egocentric image, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EgoFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for EgoFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EgoFrame({}x{})", self.width, self.height)
    }
}

impl EgoFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidFrame(format!("zero-sized frame {width}x{height}")));
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(WorldError::InvalidFrame(format!(
                "buffer length {} does not match 3*{width}*{height} = {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// A frame where every pixel has the same color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let pixels = rgb.iter().copied().cycle().take(3 * width as usize * height as usize).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(self.width - 1 - x, y, self.pixel(x, y));
            }
        }
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory png header");
            writer.write_image_data(&self.pixels).expect("in-memory png body");
        }
        buf
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, WorldError> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| WorldError::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| WorldError::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(WorldError::Png(format!(
                "expected 8-bit RGB, got {:?}/{:?}",
                info.color_type, info.bit_depth
            )));
        }
        buf.truncate(info.buffer_size());
        Self::new(info.width, info.height, buf)
    }

    pub fn save_png(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_png())
    }

    pub fn load_png(path: &Path) -> Result<Self, WorldError> {
        let bytes = std::fs::read(path).map_err(|e| WorldError::Png(format!("{}: {e}", path.display())))?;
        Self::from_png(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffer() {
        assert!(EgoFrame::new(2, 2, vec![0; 11]).is_err());
        assert!(EgoFrame::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let mut f = EgoFrame::filled(8, 4, [10, 20, 30]);
        f.set_pixel(3, 2, [255, 0, 7]);
        let back = EgoFrame::from_png(&f.to_png()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn mirror_twice_is_identity() {
        let mut f = EgoFrame::filled(5, 3, [1, 2, 3]);
        f.set_pixel(0, 1, [9, 9, 9]);
        assert_eq!(f.mirrored().pixel(4, 1), [9, 9, 9]);
        assert_eq!(f.mirrored().mirrored(), f);
    }
}
