use super::vsd::StreamSource;

/// What a virtual sensor asks of the wrapper repository: a wrapper name and
/// its initialisation parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WrapperConnectionRequest {
    pub wrapper_name: String,
    pub init_params: Vec<(String, String)>,
}

impl WrapperConnectionRequest {
    pub fn new(wrapper_name: impl Into<String>, init_params: Vec<(String, String)>) -> Self {
        WrapperConnectionRequest {
            wrapper_name: wrapper_name.into(),
            init_params,
        }
    }
}

/// Copies the wrapper name and parameters verbatim; the alias is not part of the request.
pub fn make_wcr(source: &StreamSource) -> WrapperConnectionRequest {
    WrapperConnectionRequest {
        wrapper_name: source.wrapper_name.clone(),
        init_params: source.init_params.clone(),
    }
}

/// Repository matching key: `name?k1=v1&k2=v2` with keys sorted.
///
/// Parameter order is ignored; names and values compare verbatim.
pub fn canonical_key(wcr: &WrapperConnectionRequest) -> String {
    let mut params: Vec<&(String, String)> = wcr.init_params.iter().collect();
    params.sort();
    let mut key = String::with_capacity(wcr.wrapper_name.len() + 1);
    key.push_str(&wcr.wrapper_name);
    key.push('?');
    for (i, (k, v)) in params.into_iter().enumerate() {
        if i > 0 {
            key.push('&');
        }
        key.push_str(k);
        key.push('=');
        key.push_str(v);
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_params() {
        let wcr = make_wcr(&StreamSource {
            alias: "s".into(),
            wrapper_name: "SunSPOT".into(),
            init_params: vec![],
        });
        assert_eq!(wcr, WrapperConnectionRequest::new("SunSPOT", vec![]));
        assert_eq!(canonical_key(&wcr), "SunSPOT?");
    }

    #[test]
    fn alias_is_not_part_of_the_request() {
        let a = StreamSource {
            alias: "one".into(),
            wrapper_name: "AndroidWrapper".into(),
            init_params: vec![p("port", "9005")],
        };
        let b = StreamSource {
            alias: "two".into(),
            ..a.clone()
        };
        assert_eq!(make_wcr(&a), make_wcr(&b));
        assert_eq!(make_wcr(&a).init_params, vec![p("port", "9005")]);
    }

    #[test]
    fn order_insensitive_and_case_sensitive() {
        let x = WrapperConnectionRequest::new("A", vec![p("b", "2"), p("a", "1")]);
        let y = WrapperConnectionRequest::new("A", vec![p("a", "1"), p("b", "2")]);
        assert_eq!(canonical_key(&x), "A?a=1&b=2");
        assert_eq!(canonical_key(&x), canonical_key(&y));
        let lower = WrapperConnectionRequest::new("a", vec![p("a", "1")]);
        let upper = WrapperConnectionRequest::new("A", vec![p("a", "1")]);
        assert_ne!(canonical_key(&lower), canonical_key(&upper));
    }
}
