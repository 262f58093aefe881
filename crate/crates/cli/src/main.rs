fn main() {
    println!("twn");
}
