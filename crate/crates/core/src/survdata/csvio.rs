//! `time,event,x[,z1,...,zp]` CSV datasets.

use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, SubjectRecord};
use crate::error::{Error, Result};

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_from(file)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() == 0 || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let expected = ["time", "event", "x"];
    if header.len() < 3 || !expected.iter().zip(header.iter()).all(|(e, h)| h.eq_ignore_ascii_case(e)) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with time,event,x; found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, what: &str| -> Result<f64> {
            let raw = row.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{what}`: cannot parse `{raw}` as a number"),
            })
        };
        if row.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let time = field(0, "time")?;
        let event = match row.get(1).unwrap_or("") {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse { line, message: format!("event must be 0 or 1, found `{other}`") })
            }
        };
        let x = field(2, "x")?;
        let covariates = (3..header.len()).map(|i| field(i, &header[i])).collect::<Result<Vec<_>>>()?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Parse { line, message: format!("time must be finite and >= 0, found {time}") });
        }
        records.push(SubjectRecord { time, event, x, covariates });
    }
    Dataset::with_names(records, names)
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(data, std::io::BufWriter::new(file))
}

pub fn write_csv_to<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    write!(w, "time,event,x")?;
    for n in data.covariate_names() {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for r in data.records() {
        write!(w, "{},{},{}", r.time, u8::from(r.event), r.x)?;
        for z in &r.covariates {
            write!(w, ",{z}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_covariates() {
        let src = "time,event,x,age,stage\n5,1,1,60.5,2\n3.5,0,0,45,1\n";
        let d = read_csv_from(src.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.covariate_names(), &["age".to_string(), "stage".to_string()]);
        assert_eq!(d.records()[1].covariates, vec![45.0, 1.0]);
        assert!(!d.records()[1].event);
    }

    #[test]
    fn reports_line_numbers() {
        let src = "time,event,x\n5,1,1\n3,2,0\n";
        match read_csv_from(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = "time,event,x\n5,1,1\nabc,1,0\n";
        match read_csv_from(src.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("time"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(read_csv_from("".as_bytes()), Err(Error::EmptyDataset)));
        assert!(matches!(read_csv_from("time,event,x\n".as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn bad_header() {
        assert!(matches!(read_csv_from("t,e,x\n1,1,1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn write_then_read() {
        let d = read_csv_from("time,event,x,z1\n1.25,1,0,3\n7,0,1,-0.5\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        assert_eq!(read_csv_from(buf.as_slice()).unwrap(), d);
    }
}
