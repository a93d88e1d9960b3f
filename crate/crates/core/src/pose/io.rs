use std::io::{Read, Write};

use super::{Correspondence, PoseError};
use crate::geometry::Vec3;

const MAGIC: &[u8; 5] = b"CORR1";

fn io_err(e: std::io::Error) -> PoseError {
    PoseError::Io(e.to_string())
}

/// Writes `CORR1`, a u32 count, then `u v x y z` as little-endian f32.
pub fn write_correspondences<W: Write>(
    corrs: &[Correspondence],
    out: &mut W,
) -> Result<(), PoseError> {
    let count =
        u32::try_from(corrs.len()).map_err(|_| PoseError::BadFormat("too many records".into()))?;
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&count.to_le_bytes()).map_err(io_err)?;
    for c in corrs {
        for v in [c.pixel.0, c.pixel.1, c.world.x, c.world.y, c.world.z] {
            out.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn read_correspondences<R: Read>(input: &mut R) -> Result<Vec<Correspondence>, PoseError> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(PoseError::BadFormat("missing CORR1 header".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io_err)?;
    let count = u32::from_le_bytes(word) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut rec = [0f64; 5];
        for v in &mut rec {
            input
                .read_exact(&mut word)
                .map_err(|_| PoseError::BadFormat("truncated record".into()))?;
            *v = f32::from_le_bytes(word) as f64;
        }
        out.push(Correspondence::new(
            (rec[0], rec[1]),
            Vec3::new(rec[2], rec[3], rec[4]),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_values() {
        let corrs = vec![
            Correspondence::new((1.5, 2.25), Vec3::new(0.5, -1.0, 3.0)),
            Correspondence::new((100.0, 7.75), Vec3::new(-2.5, 0.125, 9.0)),
        ];
        let mut buf = Vec::new();
        write_correspondences(&corrs, &mut buf).unwrap();
        assert_eq!(buf.len(), 9 + 2 * 20);
        assert_eq!(read_correspondences(&mut buf.as_slice()).unwrap(), corrs);
        assert!(matches!(
            read_correspondences(&mut &buf[..20]),
            Err(PoseError::BadFormat(_))
        ));
        buf[0] = b'X';
        assert!(matches!(
            read_correspondences(&mut buf.as_slice()),
            Err(PoseError::BadFormat(_))
        ));
    }
}
