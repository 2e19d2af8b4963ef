//! Landmark CSV: `image_id,idx,x,y`, 68 rows per image.

use std::collections::BTreeMap;
use std::path::Path;

use super::{LandmarkSet, LANDMARK_COUNT};
use crate::data::io::{read_rows, read_text};
use crate::error::{Error, Result};

/// Groups rows by image id. Each image needs every index 0..67 exactly once.
pub fn parse_landmarks(text: &str, path: &str) -> Result<BTreeMap<String, LandmarkSet>> {
    let mut partial: BTreeMap<String, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    read_rows(
        text,
        path,
        0,
        |h| {
            let got: Vec<&str> = h.iter().collect();
            if got == ["image_id", "idx", "x", "y"] {
                Ok(())
            } else {
                Err(format!("expected header image_id,idx,x,y, found {}", got.join(",")))
            }
        },
        |rec, _| {
            let idx: usize = rec[1].trim().parse().map_err(|_| format!("bad landmark index {:?}", &rec[1]))?;
            if idx >= LANDMARK_COUNT {
                return Err(format!("landmark index {idx} out of range"));
            }
            let coord = |s: &str| -> std::result::Result<f64, String> {
                let v: f64 = s.trim().parse().map_err(|_| format!("bad coordinate {s:?}"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("non-finite coordinate {s:?}"))
                }
            };
            let point = (coord(&rec[2])?, coord(&rec[3])?);
            let slots = partial
                .entry(rec[0].to_string())
                .or_insert_with(|| vec![None; LANDMARK_COUNT]);
            if slots[idx].replace(point).is_some() {
                return Err(format!("landmark {idx} repeated for image {:?}", &rec[0]));
            }
            Ok(())
        },
    )?;
    partial
        .into_iter()
        .map(|(id, slots)| {
            let missing = slots.iter().filter(|s| s.is_none()).count();
            if missing > 0 {
                return Err(Error::Validation(format!("image {id:?} is missing {missing} landmarks")));
            }
            let set = LandmarkSet::new(slots.into_iter().flatten().collect())?;
            Ok((id, set))
        })
        .collect()
}

/// Writes sets in the order given, `idx` 0..67 within each image.
pub fn landmarks_to_csv<'a>(sets: impl IntoIterator<Item = (&'a str, &'a LandmarkSet)>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["image_id", "idx", "x", "y"]).expect("writing to memory");
    for (id, set) in sets {
        for (idx, (x, y)) in set.points().iter().enumerate() {
            w.write_record([id, &idx.to_string(), &x.to_string(), &y.to_string()])
                .expect("writing to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<BTreeMap<String, LandmarkSet>> {
    let path = path.as_ref();
    parse_landmarks(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_landmarks_parse_back() {
        let a = LandmarkSet::new((0..LANDMARK_COUNT).map(|i| (i as f64 * 0.5, 31.0 - i as f64 / 3.0)).collect()).unwrap();
        let b = LandmarkSet::new(vec![(1.0, 2.0); LANDMARK_COUNT]).unwrap();
        let text = landmarks_to_csv([("x", &a), ("y", &b)]);
        let back = parse_landmarks(&text, "l.csv").unwrap();
        assert_eq!(back["x"], a);
        assert_eq!(back["y"], b);
    }

    fn rows(id: &str, skip: Option<usize>) -> String {
        (0..LANDMARK_COUNT)
            .filter(|&k| Some(k) != skip)
            .map(|k| format!("{id},{k},{}.5,{}\n", k, 2 * k))
            .collect()
    }

    #[test]
    fn parses_two_images() {
        let text = format!("image_id,idx,x,y\n{}{}", rows("b", None), rows("a", None));
        let map = parse_landmarks(&text, "l.csv").unwrap();
        assert_eq!(map.keys().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(map["a"].points()[3], (3.5, 6.0));
    }

    #[test]
    fn missing_and_repeated_indices_fail() {
        let text = format!("image_id,idx,x,y\n{}", rows("a", Some(10)));
        assert!(matches!(parse_landmarks(&text, "l"), Err(Error::Validation(_))));
        let text = format!("image_id,idx,x,y\n{}a,0,1,1\n", rows("a", None));
        match parse_landmarks(&text, "l") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 70),
            other => panic!("{other:?}"),
        }
        assert!(parse_landmarks("image_id,idx,x,y\na,68,0,0\n", "l").is_err());
    }
}
