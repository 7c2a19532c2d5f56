//! Minimal NIfTI-1 single-file reader/writer.
//!
//! Supported subset: little-endian 348-byte header, magic `n+1\0`, data at
//! vox_offset 352 (immediately after the 4 zero extension bytes), dtype codes
//! 2 (uint8), 4 (int16), 16 (float32), 3D shapes, srow-based axis-aligned
//! affines, no compression. Beyond `dim`, `pixdim`, `datatype`, `vox_offset`,
//! and the srow rows, only `sizeof_hdr`, `bitpix`, and `sform_code` are
//! written (so standard readers accept the files); everything else is zero on
//! write and ignored on read. The in-memory `meta` map is not persisted.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::affine::Affine;
use super::grid::{GridDescriptor, Volume, VoxelVolume};
use super::{Result, VolumeError};
use crate::scalar::Dtype;

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const SROW_Y: usize = 296;
    pub const SROW_Z: usize = 312;
    pub const MAGIC: usize = 344;
}

/// Read a NIfTI-1 volume from `path`.
pub fn read_volume(path: &Path) -> Result<VoxelVolume> {
    let bytes = std::fs::read(path)?;
    read_volume_bytes(&bytes)
}

pub fn read_volume_bytes(bytes: &[u8]) -> Result<VoxelVolume> {
    if bytes.len() < VOX_OFFSET {
        return Err(VolumeError::Format(format!(
            "file too short for a NIfTI-1 header: {} bytes",
            bytes.len()
        )));
    }
    let magic = &bytes[offsets::MAGIC..offsets::MAGIC + 4];
    if magic != MAGIC {
        return Err(VolumeError::Format(format!(
            "bad magic {:?}, expected \"n+1\\0\"",
            magic
        )));
    }

    let ndim = LittleEndian::read_i16(&bytes[offsets::DIM..]);
    if !(1..=7).contains(&ndim) {
        return Err(VolumeError::Format(format!("invalid ndim {ndim}")));
    }
    let mut dim = [1i16; 7];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = LittleEndian::read_i16(&bytes[offsets::DIM + 2 + i * 2..]);
    }
    if dim[..3.min(ndim as usize)].iter().any(|&d| d <= 0) {
        return Err(VolumeError::Format(format!("non-positive dims {dim:?}")));
    }
    if ndim > 3 && dim[3..ndim as usize].iter().any(|&d| d > 1) {
        return Err(VolumeError::Unsupported(
            "only 3D volumes are supported".into(),
        ));
    }
    let dims = [
        dim[0] as usize,
        if ndim >= 2 { dim[1] as usize } else { 1 },
        if ndim >= 3 { dim[2] as usize } else { 1 },
    ];

    let dt_code = LittleEndian::read_i16(&bytes[offsets::DATATYPE..]);
    let dtype = Dtype::from_code(dt_code).ok_or_else(|| {
        VolumeError::Unsupported(format!("unsupported NIfTI datatype code {dt_code}"))
    })?;

    let mut spacing = [0.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        *s = f64::from(LittleEndian::read_f32(
            &bytes[offsets::PIXDIM + 4 * (i + 1)..],
        ));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(VolumeError::Format(format!(
            "non-positive pixdim {spacing:?}"
        )));
    }

    let read_row = |off: usize| -> [f64; 4] {
        let mut row = [0.0f64; 4];
        for (i, v) in row.iter_mut().enumerate() {
            *v = f64::from(LittleEndian::read_f32(&bytes[off + 4 * i..]));
        }
        row
    };
    let rx = read_row(offsets::SROW_X);
    let ry = read_row(offsets::SROW_Y);
    let rz = read_row(offsets::SROW_Z);
    let affine = Affine {
        m: [
            [rx[0], rx[1], rx[2]],
            [ry[0], ry[1], ry[2]],
            [rz[0], rz[1], rz[2]],
        ],
        t: [rx[3], ry[3], rz[3]],
    };
    if !affine.is_axis_aligned(spacing, 1e-4) {
        return Err(VolumeError::Unsupported(
            "non-axis-aligned affine; rejecting rather than reorienting".into(),
        ));
    }

    let vox_offset = LittleEndian::read_f32(&bytes[offsets::VOX_OFFSET..]);
    let data_start = if vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        VOX_OFFSET
    };

    let n = dims[0] * dims[1] * dims[2];
    let expected = n * dtype.byte_size();
    if bytes.len() < data_start || bytes.len() - data_start != expected {
        return Err(VolumeError::Format(format!(
            "data section is {} bytes, expected {} for dims {:?} ({})",
            bytes.len().saturating_sub(data_start),
            expected,
            dims,
            dtype
        )));
    }
    let raw = &bytes[data_start..];

    let desc = GridDescriptor {
        dims,
        spacing,
        origin: affine.t,
        affine,
    };
    let volume = match dtype {
        Dtype::U8 => VoxelVolume::U8(Volume::from_parts(desc, raw.to_vec())?),
        Dtype::I16 => {
            let mut data = vec![0i16; n];
            LittleEndian::read_i16_into(raw, &mut data);
            VoxelVolume::I16(Volume::from_parts(desc, data)?)
        }
        Dtype::F32 => {
            let mut data = vec![0f32; n];
            LittleEndian::read_f32_into(raw, &mut data);
            VoxelVolume::F32(Volume::from_parts(desc, data)?)
        }
    };
    Ok(volume)
}

/// Write `volume` to `path` in the NIfTI-1 subset format.
pub fn write_volume(volume: &VoxelVolume, path: &Path) -> Result<()> {
    volume.validate()?;
    let bytes = write_volume_bytes(volume);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn write_volume_bytes(volume: &VoxelVolume) -> Vec<u8> {
    let desc = volume.descriptor();
    let dtype = volume.dtype();
    let n = desc.voxel_count();
    let mut buf = vec![0u8; VOX_OFFSET + n * dtype.byte_size()];

    LittleEndian::write_i32(&mut buf[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    LittleEndian::write_i16(&mut buf[offsets::DIM..], 3);
    for i in 0..3 {
        LittleEndian::write_i16(&mut buf[offsets::DIM + 2 + i * 2..], desc.dims[i] as i16);
    }
    for i in 3..7 {
        LittleEndian::write_i16(&mut buf[offsets::DIM + 2 + i * 2..], 1);
    }
    LittleEndian::write_i16(&mut buf[offsets::DATATYPE..], dtype.code());
    LittleEndian::write_i16(&mut buf[offsets::BITPIX..], (dtype.byte_size() * 8) as i16);
    LittleEndian::write_f32(&mut buf[offsets::PIXDIM..], 1.0);
    for i in 0..3 {
        LittleEndian::write_f32(
            &mut buf[offsets::PIXDIM + 4 * (i + 1)..],
            desc.spacing[i] as f32,
        );
    }
    LittleEndian::write_f32(&mut buf[offsets::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_i16(&mut buf[offsets::SFORM_CODE..], 1);
    let rows = [
        (offsets::SROW_X, 0usize),
        (offsets::SROW_Y, 1),
        (offsets::SROW_Z, 2),
    ];
    for (off, r) in rows {
        for c in 0..3 {
            LittleEndian::write_f32(&mut buf[off + 4 * c..], desc.affine.m[r][c] as f32);
        }
        LittleEndian::write_f32(&mut buf[off + 12..], desc.affine.t[r] as f32);
    }
    buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC);

    let data = &mut buf[VOX_OFFSET..];
    match volume {
        VoxelVolume::U8(v) => data.copy_from_slice(v.data()),
        VoxelVolume::I16(v) => LittleEndian::write_i16_into(v.data(), data),
        VoxelVolume::F32(v) => LittleEndian::write_f32_into(v.data(), data),
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("workbench-nifti-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn zero_volume_reads_back() {
        let v: VoxelVolume = Volume::<u8>::zeros([4, 4, 4], [1.0; 3], [0.0; 3]).into();
        let path = tmp("zeros.nii");
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.dims(), [4, 4, 4]);
        assert_eq!(back.nonzero_count(), 0);
        assert_eq!(back, v);
    }

    #[test]
    fn file_length_is_offset_plus_data() {
        // 352-byte header+pad, then one byte per uint8 voxel.
        let v: VoxelVolume = Volume::<u8>::zeros([4, 4, 4], [1.0; 3], [0.0; 3]).into();
        let bytes = write_volume_bytes(&v);
        assert_eq!(bytes.len(), VOX_OFFSET + 64);

        let f: VoxelVolume = Volume::<f32>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).into();
        let bytes = write_volume_bytes(&f);
        assert_eq!(bytes.len() - VOX_OFFSET, 32);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let mut v = Volume::<i16>::zeros([3, 2, 4], [0.5, 1.0, 2.0], [1.0, -2.0, 3.5]);
        for (i, d) in v.data_mut().iter_mut().enumerate() {
            *d = (i as i16) - 7;
        }
        let v: VoxelVolume = v.into();
        let path = tmp("roundtrip.nii");
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, v);

        // Re-writing the read volume is byte-identical.
        let again = write_volume_bytes(&back);
        assert_eq!(again, std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_data_is_a_format_error() {
        let v: VoxelVolume = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).into();
        let mut bytes = write_volume_bytes(&v);
        bytes.truncate(VOX_OFFSET + 7);
        match read_volume_bytes(&bytes) {
            Err(VolumeError::Format(msg)) => assert!(msg.contains("data section")),
            other => panic!("expected FormatError, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let v: VoxelVolume = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).into();
        let mut bytes = write_volume_bytes(&v);
        bytes[offsets::MAGIC] = b'x';
        assert!(matches!(
            read_volume_bytes(&bytes),
            Err(VolumeError::Format(_))
        ));
    }

    #[test]
    fn unsupported_dtype_rejected() {
        let v: VoxelVolume = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).into();
        let mut bytes = write_volume_bytes(&v);
        LittleEndian::write_i16(&mut bytes[offsets::DATATYPE..], 64);
        assert!(matches!(
            read_volume_bytes(&bytes),
            Err(VolumeError::Unsupported(_))
        ));
    }

    #[test]
    fn oblique_affine_rejected() {
        let v: VoxelVolume = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).into();
        let mut bytes = write_volume_bytes(&v);
        LittleEndian::write_f32(&mut bytes[offsets::SROW_X + 4..], 0.3);
        assert!(matches!(
            read_volume_bytes(&bytes),
            Err(VolumeError::Unsupported(_))
        ));
    }
}
