struct A {
  char c;
  int i;
  char buf[64];
  void (*fp)();
  double d;
};
