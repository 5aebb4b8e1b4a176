//! Frame and video files: PNG, animated PNG and WMT1.

use std::path::Path;

use ndarray::{Array3, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::tensor::{RawTensor, VideoTensor};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn rgb_bytes(frame: ArrayView3<f32>) -> Vec<u8> {
    frame.iter().map(|&v| to_u8(v)).collect()
}

/// Decodes any PNG the `image` crate understands into `[0, 1]` RGB.
pub fn decode_png(bytes: &[u8]) -> Result<Array3<f32>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb32f();
    let (w, h) = img.dimensions();
    Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw())
        .map_err(|e| Error::Internal(e.to_string()))
}

pub fn encode_png(frame: ArrayView3<f32>) -> Result<Vec<u8>> {
    let (h, w, c) = frame.dim();
    if c != 3 {
        return Err(Error::shape("3 channels", c));
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&rgb_bytes(frame)).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

/// Animated PNG, one frame per video frame, looping forever.
pub fn encode_apng(video: &VideoTensor, fps: u16) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, video.width() as u32, video.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_animated(video.frames() as u32, 0).map_err(png_err)?;
    enc.set_frame_delay(1, fps.max(1)).map_err(png_err)?;
    let mut writer = enc.write_header().map_err(png_err)?;
    for frame in video.array().axis_iter(Axis(0)) {
        writer.write_image_data(&rgb_bytes(frame)).map_err(png_err)?;
    }
    writer.finish().map_err(png_err)?;
    Ok(out)
}

fn png_err(e: png::EncodingError) -> Error {
    Error::Format(format!("png: {e}"))
}

/// A first frame from PNG bytes or a WMT1 tensor shaped `[H, W, 3]` or `[1, H, W, 3]`.
pub fn decode_frame(bytes: &[u8]) -> Result<Array3<f32>> {
    if bytes.starts_with(b"WMT1") {
        let raw = RawTensor::from_bytes(bytes)?;
        let dims = match raw.dims.as_slice() {
            [h, w, 3] | [1, h, w, 3] => (*h, *w, 3),
            other => return Err(Error::shape("[H, W, 3] or [1, H, W, 3]", format!("{other:?}"))),
        };
        let frame = Array3::from_shape_vec(dims, raw.data).map_err(|e| Error::Internal(e.to_string()))?;
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel".into()));
        }
        Ok(frame)
    } else {
        decode_png(bytes)
    }
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<Array3<f32>> {
    let path = path.as_ref();
    decode_frame(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Writes PNG unless the extension is `.wmt1`.
pub fn save_frame(frame: ArrayView3<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e == "wmt1") {
        RawTensor::new(frame.shape().to_vec(), frame.iter().copied().collect())?.to_bytes()
    } else {
        encode_png(frame)?
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_video(path: impl AsRef<Path>) -> Result<VideoTensor> {
    VideoTensor::from_raw(RawTensor::load(path)?)
}

pub fn save_video(video: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    video.to_raw().save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8_bit_values() {
        let frame = Array3::from_shape_fn((4, 6, 3), |(r, c, ch)| {
            ((r * 37 + c * 11 + ch * 5) % 256) as f32 / 255.0
        });
        let back = decode_frame(&encode_png(frame.view()).unwrap()).unwrap();
        for (a, b) in frame.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn wmt1_frames_accept_both_ranks() {
        let frame = Array3::from_elem((2, 3, 3), 0.25f32);
        let raw = RawTensor::new(vec![1, 2, 3, 3], vec![0.25; 18]).unwrap();
        assert_eq!(decode_frame(&raw.to_bytes()).unwrap(), frame);
        let bad = RawTensor::new(vec![2, 3, 2], vec![0.0; 12]).unwrap();
        assert!(decode_frame(&bad.to_bytes()).is_err());
    }

    #[test]
    fn apng_has_one_frame_control_per_frame() {
        let video = VideoTensor::zeros(3, 4, 4);
        let bytes = encode_apng(&video, 8).unwrap();
        let fctl = bytes.windows(4).filter(|w| w == b"fcTL").count();
        assert_eq!(fctl, 3);
        let img = decode_png(&bytes).unwrap();
        assert_eq!(img.dim(), (4, 4, 3));
    }
}
