//! Synthetic test data and the small file formats used by the pipelines.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Piecewise-constant image made of `rects` random axis-aligned rectangles
/// with intensities in `[0, 255]`, painted over a random background.
pub fn cartoon_image<R: Rng + ?Sized>(n1: usize, n2: usize, rects: usize, rng: &mut R) -> Vector {
    let mut img = vec![rng.random_range(0.0..255.0); n1 * n2];
    for _ in 0..rects {
        let (h, w) = (
            rng.random_range(n1 / 8..=n1 / 2).max(1),
            rng.random_range(n2 / 8..=n2 / 2).max(1),
        );
        let (i0, j0) = (rng.random_range(0..=n1 - h), rng.random_range(0..=n2 - w));
        let level = rng.random_range(0.0..255.0);
        for i in i0..i0 + h {
            for j in j0..j0 + w {
                img[i * n2 + j] = level;
            }
        }
    }
    Vector::from_vec(img)
}

/// `10 log10(255^2 / mean squared error)`.
pub fn psnr(x: &Vector, x0: &Vector) -> f64 {
    let mse = (x - x0).norm_squared() / x.len() as f64;
    10.0 * (255.0f64.powi(2) / mse).log10()
}

pub fn relative_error(x: &Vector, x0: &Vector) -> f64 {
    (x - x0).norm() / x0.norm()
}

fn next_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && tok.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "truncated PGM header",
        )));
    }
    Ok(tok)
}

fn bad_pgm(msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

/// Reads an 8- or 16-bit PGM (binary `P5` or ASCII `P2`) rescaled to
/// `[0, 255]`. Returns `(rows, cols, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vector)> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let magic = next_token(&mut r)?;
    let parse = |s: String| {
        s.parse::<usize>()
            .map_err(|_| bad_pgm(format!("bad PGM header field {s:?}")))
    };
    let cols = parse(next_token(&mut r)?)?;
    let rows = parse(next_token(&mut r)?)?;
    let maxval = parse(next_token(&mut r)?)?;
    if rows == 0 || cols == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad_pgm("PGM dimensions or maxval out of range"));
    }
    let n = rows * cols;
    let raw: Vec<f64> = match magic.as_str() {
        "P5" => {
            let width = if maxval < 256 { 1 } else { 2 };
            let mut buf = vec![0u8; n * width];
            r.read_exact(&mut buf)?;
            if width == 1 {
                buf.iter().map(|&b| b as f64).collect()
            } else {
                buf.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                    .collect()
            }
        }
        "P2" => (0..n)
            .map(|_| next_token(&mut r).and_then(|t| t.parse::<f64>().map_err(|_| bad_pgm("bad PGM pixel"))))
            .collect::<Result<_>>()?,
        other => return Err(bad_pgm(format!("unsupported PGM magic {other:?}"))),
    };
    let scale = 255.0 / maxval as f64;
    Ok((rows, cols, Vector::from_iterator(n, raw.into_iter().map(|v| v * scale))))
}

/// Writes an 8-bit binary PGM, clipping to `[0, 255]`.
pub fn write_pgm(path: &Path, rows: usize, cols: usize, pixels: &Vector) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Row-major matrix as CSV, preceded by a `rows,cols` line.
pub fn write_matrix_csv<W: Write>(out: W, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::Shape {
            expected: rows * cols,
            got: data.len(),
            context: "matrix csv",
        });
    }
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([rows.to_string(), cols.to_string()])?;
    for row in data.chunks(cols.max(1)) {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = rd.records();
    let head = records.next().ok_or_else(|| bad_pgm("empty matrix csv"))??;
    let dim = |i: usize| -> Result<usize> {
        head.get(i)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad_pgm("matrix csv header must be rows,cols"))
    };
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut data = Vec::with_capacity(rows * cols);
    for rec in records {
        for field in rec?.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad_pgm(format!("bad number {field:?}")))?,
            );
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Shape {
            expected: rows * cols,
            got: data.len(),
            context: "matrix csv body",
        });
    }
    Ok((rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cartoon_is_piecewise_constant_and_seeded() {
        let a = cartoon_image(32, 32, 6, &mut ChaCha8Rng::seed_from_u64(4));
        let b = cartoon_image(32, 32, 6, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        let mut levels: Vec<f64> = a.iter().copied().collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() <= 7 && levels.len() >= 2);
        assert!(a.iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let px = Vector::from_fn(12, |i, _| (i * 20) as f64);
        write_pgm(&path, 3, 4, &px).unwrap();
        let (r, c, back) = read_pgm(&path).unwrap();
        assert_eq!((r, c), (3, 4));
        assert_eq!(back, px);
    }

    #[test]
    fn ascii_pgm_with_comment_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, "P2\n# note\n2 1\n65535\n0 65535\n").unwrap();
        let (r, c, px) = read_pgm(&path).unwrap();
        assert_eq!((r, c), (1, 2));
        assert_eq!(px.as_slice(), &[0.0, 255.0]);
        assert!(read_pgm(&dir.path().join("missing.pgm")).is_err());
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let data = vec![1.5, -2.0, 3.25, 0.0, 1e-9, 7.0];
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, 2, 3, &data).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("2,3\n"));
        let (r, c, back) = read_matrix_csv(&buf[..]).unwrap();
        assert_eq!((r, c), (2, 3));
        assert_eq!(back, data);
    }

    #[test]
    fn psnr_of_uniform_error() {
        let x0 = Vector::zeros(4);
        let x = Vector::from_element(4, 255.0 / 10.0);
        assert!((psnr(&x, &x0) - 20.0).abs() < 1e-12);
    }
}
