#ifndef HEADER_H
#define HEADER_H

typedef struct node {
    struct node *next;
    int value;
} node_t;

enum color { RED, GREEN, BLUE };

int declared_only(int a, int b);

static inline int header_inline(int a)
{
    return a + 1;
}

static inline node_t *node_next(node_t *n) { return n ? n->next : 0; }

union value {
    int i;
    float f;
};

static int table_size(void)
{
    return 3;
}

#endif
