//! Command line interface (placeholder while the pipeline modules land).

pub fn main_entry() -> i32 {
    eprintln!("{{\"error\":\"cli not wired yet\"}}");
    1
}
