//! Binary portable bitmap (P4) output. Set entries are black.

use std::io::{self, Write};

use ndarray::Array2;

pub fn write_pbm(m: &Array2<bool>, w: &mut dyn Write) -> io::Result<()> {
    let (rows, cols) = m.dim();
    write!(w, "P4\n{cols} {rows}\n")?;
    let mut packed = vec![0u8; cols.div_ceil(8)];
    for row in m.rows() {
        packed.fill(0);
        for (j, &on) in row.iter().enumerate() {
            if on {
                packed[j / 8] |= 0x80 >> (j % 8);
            }
        }
        w.write_all(&packed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_rows_msb_first() {
        let mut m = Array2::from_elem((2, 10), false);
        m[[0, 0]] = true;
        m[[0, 9]] = true;
        m[[1, 7]] = true;
        let mut out = Vec::new();
        write_pbm(&m, &mut out).unwrap();
        let header = b"P4\n10 2\n";
        assert_eq!(&out[..header.len()], header);
        assert_eq!(&out[header.len()..], &[0x80, 0x40, 0x01, 0x00]);
    }
}
