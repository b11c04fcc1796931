//! Binary portable graymap (P5) output for membership slices.

use std::path::Path;

use flexconn::Volume;

use crate::error::{CliError, CliResult};

pub fn encode_slice(volume: &Volume, z: usize) -> Vec<u8> {
    let [nx, ny, _] = volume.dims();
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(
        volume
            .slice_data(z)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Writes `slice_0000.pgm`, `slice_0001.pgm`, ... into `dir`.
pub fn write_slices(volume: &Volume, dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(flexconn::Error::io(dir, e)))?;
    for z in 0..volume.num_slices() {
        let path = dir.join(format!("slice_{z:04}.pgm"));
        std::fs::write(&path, encode_slice(volume, z)).map_err(|e| CliError::Core(flexconn::Error::io(&path, e)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let v = Volume::new([3, 1, 1], [1.0; 3], vec![0.0, 0.5, 2.0]).unwrap();
        let bytes = encode_slice(&v, 0);
        assert_eq!(&bytes[..11], b"P5\n3 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255]);
    }
}
