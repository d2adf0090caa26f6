#include <cstdio>
int main() { std::puts("garment: CLI under construction"); return 0; }
