/* Small synthetic corpus for the density histogram. Expected (10 bins):
   field_bytes/total per struct is noted on each line. */
struct P1 { char a; int b; };                       /* 5/8    */
struct P2 { double d; };                            /* 8/8    */
struct P3 { char a; double b; };                    /* 9/16   */
struct P4 { int a; int b; };                        /* 8/8    */
struct P5 { char a; char b; short c; };             /* 4/4    */
struct P6 { char a; long b; char c; };              /* 10/24  */
struct P7 { short a; char b; };                     /* 3/4    */
struct P8 { char buf[3]; int x; };                  /* 7/8    */
struct P9 { char c; void *p; char d; void *q; };    /* 18/32  */
struct P10 { int a; char b[12]; };                  /* 16/16  */
struct P11 { char a; long double x; };              /* 17/32  */
struct P12 { char a; };                             /* 1/1    */
