use std::io::{self, Write};

use super::{RiskFeature, GREEN, ORANGE, RED};
use crate::fmt::sig9;

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Writes a GeoJSON FeatureCollection of points, one feature per line.
///
/// Keys appear in a fixed order and floats carry at most 9 significant
/// digits, so identical input gives identical bytes.
pub fn emit_geojson<W: Write + ?Sized>(features: &[RiskFeature], sink: &mut W) -> io::Result<()> {
    sink.write_all(b"{\"type\":\"FeatureCollection\",\"features\":[")?;
    for (n, f) in features.iter().enumerate() {
        if n > 0 {
            sink.write_all(b",")?;
        }
        write!(
            sink,
            "\n{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\
             \"properties\":{{\"division\":{},\"parent\":{},\"active\":{},\"danger_raw\":{},\"danger_norm\":{},\"color\":\"{}\"}}}}",
            sig9(f.point.lon()),
            sig9(f.point.lat()),
            json_str(f.key.division()),
            json_str(f.key.parent()),
            f.active,
            sig9(f.danger_raw),
            sig9(f.danger_norm),
            f.color.hex(),
        )?;
    }
    if !features.is_empty() {
        sink.write_all(b"\n")?;
    }
    sink.write_all(b"]}\n")
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 20.0;

/// Lon/lat window shown by the plot, padded and never degenerate.
fn extent(features: &[RiskFeature]) -> (f64, f64, f64, f64) {
    if features.is_empty() {
        return (-180.0, 180.0, -90.0, 90.0);
    }
    let lons = features.iter().map(|f| f.point.lon());
    let lats = features.iter().map(|f| f.point.lat());
    let (mut x0, mut x1) = (lons.clone().fold(f64::MAX, f64::min), lons.fold(f64::MIN, f64::max));
    let (mut y0, mut y1) = (lats.clone().fold(f64::MAX, f64::min), lats.fold(f64::MIN, f64::max));
    let pad_x = ((x1 - x0) * 0.05).max(0.5);
    let pad_y = ((y1 - y0) * 0.05).max(0.5);
    x0 -= pad_x;
    x1 += pad_x;
    y0 -= pad_y;
    y1 += pad_y;
    (x0, x1, y0, y1)
}

/// Writes a standalone HTML page plotting each feature as a coloured circle
/// on an equirectangular projection. No scripts or remote resources.
pub fn emit_html<W: Write + ?Sized>(features: &[RiskFeature], sink: &mut W) -> io::Result<()> {
    let (x0, x1, y0, y1) = extent(features);
    // equal degree scale on both axes
    let scale = ((WIDTH - 2.0 * MARGIN) / (x1 - x0)).min((HEIGHT - 2.0 * MARGIN) / (y1 - y0));
    let project = |lon: f64, lat: f64| (MARGIN + (lon - x0) * scale, MARGIN + (y1 - lat) * scale);

    writeln!(sink, "<!DOCTYPE html>")?;
    writeln!(sink, "<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Hotspot risk map</title>")?;
    writeln!(
        sink,
        "<style>\nbody {{ font-family: sans-serif; margin: 1em; background: #fafafa; }}\n\
         svg {{ background: #ffffff; border: 1px solid #cccccc; }}\n\
         .legend {{ margin-top: 0.5em; font-size: 14px; }}\n</style>\n</head>\n<body>"
    )?;
    writeln!(sink, "<h1>Hotspot risk map</h1>")?;
    writeln!(
        sink,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    for f in features {
        let (cx, cy) = project(f.point.lon(), f.point.lat());
        writeln!(
            sink,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"5\" fill=\"{}\" stroke=\"#333333\" stroke-width=\"0.5\">\
             <title>{}, {}: active {}, danger {} ({})</title></circle>",
            f.color.hex(),
            escape_html(f.key.division()),
            escape_html(f.key.parent()),
            f.active,
            sig9(f.danger_raw),
            sig9(f.danger_norm),
        )?;
    }
    writeln!(sink, "</svg>")?;
    writeln!(sink, "<div class=\"legend\">")?;
    for (color, label) in [(GREEN, "low risk"), (ORANGE, "near existing hotspots"), (RED, "hotspot or imminent hotspot")] {
        writeln!(
            sink,
            "<svg width=\"14\" height=\"14\"><rect width=\"14\" height=\"14\" fill=\"{}\"/></svg> {label}<br>",
            color.hex()
        )?;
    }
    writeln!(sink, "</div>\n<p>{} divisions</p>\n</body>\n</html>", features.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocode::GeoPoint;
    use crate::ingest::DivisionKey;
    use crate::riskmap::gradient;

    fn feature(name: &str, lat: f64, lon: f64, norm: f64) -> RiskFeature {
        RiskFeature {
            key: DivisionKey::new(name, "State").unwrap(),
            point: GeoPoint::new(lat, lon).unwrap(),
            active: 12,
            danger_raw: norm * 0.3,
            danger_norm: norm,
            color: gradient(norm).unwrap(),
        }
    }

    fn geojson(features: &[RiskFeature]) -> String {
        let mut buf = Vec::new();
        emit_geojson(features, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn html(features: &[RiskFeature]) -> String {
        let mut buf = Vec::new();
        emit_html(features, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_collection() {
        let text = geojson(&[]);
        assert_eq!(text, "{\"type\":\"FeatureCollection\",\"features\":[]}\n");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["features"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn feature_layout() {
        let text = geojson(&[feature("A \"quoted\"", 19.5, 72.25, 1.0)]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let f = &v["features"][0];
        assert_eq!(f["geometry"]["type"], "Point");
        assert_eq!(f["geometry"]["coordinates"], serde_json::json!([72.25, 19.5]));
        assert_eq!(f["properties"]["division"], "A \"quoted\"");
        assert_eq!(f["properties"]["color"], "#FF0000");
        assert_eq!(f["properties"]["danger_norm"], 1.0);
        assert_eq!(f["properties"]["active"], 12);
    }

    #[test]
    fn round_trip_properties() {
        let features = vec![feature("A", 10.0, 70.0, 0.0), feature("B", 11.0, 71.0, 0.25), feature("C", 12.0, 72.0, 0.75)];
        let v: serde_json::Value = serde_json::from_str(&geojson(&features)).unwrap();
        let parsed = v["features"].as_array().unwrap();
        assert_eq!(parsed.len(), 3);
        for (p, f) in parsed.iter().zip(&features) {
            assert_eq!(p["properties"]["division"], f.key.division());
            let emitted = |x: f64| sig9(x).parse::<f64>().unwrap();
            assert_eq!(p["properties"]["danger_norm"].as_f64().unwrap(), emitted(f.danger_norm));
            assert_eq!(p["properties"]["danger_raw"].as_f64().unwrap(), emitted(f.danger_raw));
            assert_eq!(p["properties"]["color"], f.color.hex());
        }
    }

    #[test]
    fn html_circles_match_features() {
        assert_eq!(html(&[]).matches("<circle").count(), 0);
        let features = vec![feature("A", 10.0, 70.0, 0.0), feature("B<x>", 11.0, 71.0, 0.5), feature("C", 12.0, 72.0, 1.0)];
        let page = html(&features);
        assert_eq!(page.matches("<circle").count(), 3);
        assert!(page.contains("B&lt;x&gt;"));
        for f in &features {
            assert!(page.contains(&format!("fill=\"{}\" stroke", f.color.hex())));
        }
        assert!(!page.contains("http://") || page.matches("http://").count() == 1);
        assert!(!page.contains("<script"));
    }

    #[test]
    fn single_feature_plot_is_finite() {
        let page = html(&[feature("A", 10.0, 70.0, 0.5)]);
        assert!(!page.contains("NaN") && !page.contains("inf"));
    }
}
