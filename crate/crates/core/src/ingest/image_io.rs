use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::{Image, IntensityImage};
use crate::error::{Error, Result};

/// Reads a 16-bit (or 8-bit) single-channel depth image, PNG or PGM.
pub fn load_depth(path: impl AsRef<Path>) -> Result<Image<u16>> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(b) => Image::new(w, h, b.into_raw()),
        DynamicImage::ImageLuma8(b) => Image::new(w, h, b.into_raw().into_iter().map(u16::from).collect()),
        other => Err(Error::Format(format!(
            "{}: depth must be single-channel, found {:?}",
            path.as_ref().display(),
            other.color()
        ))),
    }
}

/// Reads an intensity image. Grayscale is used as-is; colour images are
/// reduced to luma at their native bit depth.
pub fn load_intensity(path: impl AsRef<Path>) -> Result<IntensityImage> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    if sixteen {
        Ok(IntensityImage::Gray16(Image::new(w, h, img.into_luma16().into_raw())?))
    } else {
        Ok(IntensityImage::Gray8(Image::new(w, h, img.into_luma8().into_raw())?))
    }
}

pub fn save_depth_png(image: &Image<u16>, path: impl AsRef<Path>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, image.data().to_vec())
            .expect("buffer size matches image");
    buf.save(path)?;
    Ok(())
}

pub fn save_intensity_png(image: &IntensityImage, path: impl AsRef<Path>) -> Result<()> {
    match image {
        IntensityImage::Gray8(i) => {
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(i.width() as u32, i.height() as u32, i.data().to_vec())
                    .expect("buffer size matches image");
            buf.save(path)?;
        }
        IntensityImage::Gray16(i) => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(i.width() as u32, i.height() as u32, i.data().to_vec())
                    .expect("buffer size matches image");
            buf.save(path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let depth = Image::from_fn(5, 3, |u, v| (u * 1000 + v * 7) as u16);
        let p = dir.path().join("d.png");
        save_depth_png(&depth, &p).unwrap();
        assert_eq!(load_depth(&p).unwrap(), depth);

        let inten = IntensityImage::Gray8(Image::from_fn(5, 3, |u, v| (u * 40 + v) as u8));
        let p = dir.path().join("i.png");
        save_intensity_png(&inten, &p).unwrap();
        assert_eq!(load_intensity(&p).unwrap(), inten);

        // 16-bit binary PGM, big-endian samples
        let mut pgm = b"P5\n2 1\n65535\n".to_vec();
        pgm.extend_from_slice(&[0x01, 0x02, 0xff, 0xfe]);
        let p = dir.path().join("d.pgm");
        std::fs::write(&p, pgm).unwrap();
        assert_eq!(load_depth(&p).unwrap().data(), &[0x0102, 0xfffe]);
    }
}
