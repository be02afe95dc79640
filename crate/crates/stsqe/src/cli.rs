//! Command-line front end (placeholder while the eliminators land).

pub fn run() -> i32 {
    eprintln!("not yet wired up");
    2
}
