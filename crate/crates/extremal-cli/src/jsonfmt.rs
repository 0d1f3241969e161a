//! Minimal JSON writer printing floats with 17 significant digits, so that
//! re-ingested values round-trip losslessly.

pub fn f64_field(v: f64) -> String {
    if v.is_nan() {
        "null".into()
    } else if v.is_infinite() {
        if v > 0.0 { "1e999".into() } else { "-1e999".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub struct JsonObject {
    body: String,
}

impl JsonObject {
    pub fn new() -> JsonObject {
        JsonObject { body: String::new() }
    }

    fn sep(&mut self) {
        if !self.body.is_empty() {
            self.body.push_str(",\n  ");
        }
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.sep();
        self.body.push_str(&format!("\"{key}\": {}", f64_field(v)));
        self
    }

    pub fn int(&mut self, key: &str, v: i64) -> &mut Self {
        self.sep();
        self.body.push_str(&format!("\"{key}\": {v}"));
        self
    }

    pub fn str(&mut self, key: &str, v: &str) -> &mut Self {
        self.sep();
        self.body.push_str(&format!("\"{key}\": \"{v}\""));
        self
    }

    pub fn bool(&mut self, key: &str, v: bool) -> &mut Self {
        self.sep();
        self.body.push_str(&format!("\"{key}\": {v}"));
        self
    }

    pub fn null(&mut self, key: &str) -> &mut Self {
        self.sep();
        self.body.push_str(&format!("\"{key}\": null"));
        self
    }

    pub fn opt_num(&mut self, key: &str, v: Option<f64>) -> &mut Self {
        match v {
            Some(x) => self.num(key, x),
            None => self.null(key),
        }
    }

    pub fn finish(&self) -> String {
        format!("{{\n  {}\n}}\n", self.body)
    }
}
