#include <cstdio>
int main() { std::puts("ftgrpo: placeholder"); return 0; }
