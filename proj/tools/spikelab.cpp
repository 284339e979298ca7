// Placeholder entry point; the experiment runner lands with the CLI module.
int main() { return 0; }
